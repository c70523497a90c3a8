#include "volterra/cli.hpp"
#include "volterra/parallel.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    unsigned threads = 0;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "override the config seed");
    sub->add_option("--out", c.out, "output directory (default: run.out from the config)");
    sub->add_option("--threads", c.threads, "worker thread cap (results do not depend on it)");
}

}  // namespace

int main(int argc, char** argv) {
    namespace vc = volterra::cli;
    CLI::App app{"Volterra Gaussian functional calculus and BSDE toolkit"};
    app.require_subcommand(1);
    Common common;
    using Cmd = int (*)(const volterra::ExperimentConfig&, const std::filesystem::path&, std::ostream&);
    const std::vector<std::tuple<std::string, std::string, Cmd>> cmds{
        {"simulate", "sample paths and compare mean/covariance with the analytic law", vc::cmd_simulate},
        {"check-hypotheses", "audit kernel and drift regularity", vc::cmd_check_hypotheses},
        {"solve-bsde", "backward least-squares Monte Carlo solve", vc::cmd_solve},
        {"verify-mild", "mild-equation residuals and oracle agreement", vc::cmd_verify},
        {"converge", "error ladder over grid and sample sizes", vc::cmd_converge},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [name, help, fn] : cmds) {
        subs.push_back(app.add_subcommand(name, help));
        add_common(subs.back(), common);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : vc::kExitConfig;
    }
    if (common.threads > 0) volterra::set_max_threads(common.threads);
    try {
        auto cfg = volterra::load_config(common.config);
        if (common.seed) cfg.seed = *common.seed;
        const std::filesystem::path out = common.out.empty() ? std::filesystem::path(cfg.out) : std::filesystem::path(common.out);
        for (std::size_t i = 0; i < subs.size(); ++i)
            if (subs[i]->parsed()) return std::get<2>(cmds[i])(cfg, out, std::cout);
    } catch (const volterra::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return vc::kExitConfig;
    } catch (const volterra::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return vc::kExitVerify;
    } catch (const volterra::DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return vc::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return vc::kExitVerify;
    }
    return vc::kExitConfig;
}
