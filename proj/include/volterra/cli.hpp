#pragma once

// Subcommand implementations behind tools/volterra_cli. Each returns the
// process exit code: 0 success, 1 verification failure, 2 config error.

#include "volterra/bsde.hpp"
#include "volterra/config.hpp"
#include "volterra/kernels.hpp"
#include "volterra/mild.hpp"
#include "volterra/path_io.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>

namespace volterra::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerify = 1;
inline constexpr int kExitConfig = 2;

namespace detail {

inline void write_json(const fs::path& file, const json& j) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << j.dump(2) << '\n';
}

inline std::ofstream open_out(const fs::path& file, bool binary = false) {
    std::ofstream out(file, binary ? std::ios::binary : std::ios::out);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    return out;
}

inline json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(r);
    }
    return rows;
}

/// Finite doubles as numbers, others as strings ("inf", "nan").
inline json num(double x) {
    if (std::isfinite(x)) return x;
    return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
}

inline json condition_json(const ConditionSpec& c) {
    json j{{"id", c.id}, {"s", c.s}};
    switch (c.source) {
        case ConditionSpec::Source::none: j["source"] = "none"; break;
        case ConditionSpec::Source::observed:
            j["source"] = "observed";
            j["times"] = c.times;
            j["values"] = matrix_json(c.values);
            break;
        case ConditionSpec::Source::simulated:
            j["source"] = "simulated";
            j["seed"] = c.seed;
            break;
    }
    return j;
}

inline json experiment_json(const ExperimentConfig& c) {
    return json{{"kernel", c.kernel.describe()}, {"drift", c.drift.describe()}, {"M", c.M}, {"T", c.T}, {"terminal", c.terminal_text},
                {"driver", c.driver.text()}, {"lipschitz", c.lipschitz}, {"seed", c.seed}};
}

/// Terminal depends on X_T only.
inline bool terminal_is_markov(const ExperimentConfig& c) {
    return c.terminal.anchors().size() == 1 && std::abs(c.terminal.anchors()[0] - c.T) <= kTimeEps * std::max(1.0, c.T);
}

enum class OracleKind { none, gaussian, pde };

inline OracleKind pick_oracle(const ExperimentConfig& c) {
    const bool markov = terminal_is_markov(c);
    switch (c.verify.oracle) {
        case VerifyKnobs::Oracle::none: return OracleKind::none;
        case VerifyKnobs::Oracle::gaussian:
            if (!c.driver.is_zero() || !markov || c.dim() > 3) throw ConfigError("verify.oracle", "gaussian oracle needs f = 0, xi = g(X_T) and d <= 3");
            return OracleKind::gaussian;
        case VerifyKnobs::Oracle::pde:
            if (c.dim() != 1 || !markov || c.driver.depends_on_state())
                throw ConfigError("verify.oracle", "pde oracle needs d = 1, xi = g(X_T) and f = f(t, y, z)");
            return OracleKind::pde;
        case VerifyKnobs::Oracle::automatic:
            if (markov && c.driver.is_zero() && c.dim() <= 3) return OracleKind::gaussian;
            if (markov && c.dim() == 1 && !c.driver.depends_on_state()) return OracleKind::pde;
            return OracleKind::none;
    }
    return OracleKind::none;
}

inline const char* to_string(OracleKind k) {
    switch (k) {
        case OracleKind::gaussian: return "gaussian";
        case OracleKind::pde: return "pde";
        default: return "none";
    }
}

inline double terminal_of(const ExperimentConfig& c, const Vector& x) { return c.terminal(c.T, {x.data(), static_cast<std::size_t>(x.size())}); }

/// Oracle value of Y_s(eta), if one applies.
inline std::optional<double> oracle_value(const ExperimentConfig& c, OracleKind kind, const ConditionData& cond, WienerScheme scheme) {
    switch (kind) {
        case OracleKind::none: return std::nullopt;
        case OracleKind::gaussian:
            return oracle_gaussian_terminal(c.kernel, c.drift, cond, c.T, [&](const Vector& x) { return terminal_of(c, x); }, 40, scheme);
        case OracleKind::pde: {
            const double s = cond.trivial() ? 0.0 : cond.s;
            const double x0 = conditional_mean(c.kernel, c.drift, cond, c.T, scheme)(0);
            const double bT = beta(c.drift, c.T)(0);
            const auto g = [&](double x) {
                Vector v(1);
                v(0) = x;
                return terminal_of(c, v);
            };
            return oracle_markovian_pde(c.kernel, s, x0, bT, g, c.driver, c.T).value;
        }
    }
    return std::nullopt;
}

inline void write_solution_csv(const fs::path& file, const BsdeSolution& sol, std::size_t paths) {
    auto out = open_out(file);
    out << "path,time,Y";
    for (int c = 0; c < sol.dim; ++c) out << ",Z" << (c + 1);
    out << '\n';
    const std::size_t n_out = std::min(paths, sol.paths);
    for (std::size_t n = 0; n < n_out; ++n)
        for (std::size_t i = sol.s_index; i < sol.grid.size(); ++i) {
            out << n << ',' << fmt17(sol.grid[i]) << ',' << fmt17(sol.y(n, i));
            const auto z = sol.z(n, i);
            for (int c = 0; c < sol.dim; ++c) out << ',' << fmt17(z(c));
            out << '\n';
        }
}

inline json solution_json(const BsdeSolution& sol) {
    json cn = json::array();
    for (std::size_t i = sol.s_index; i < sol.condition_numbers.size(); ++i) cn.push_back(num(sol.condition_numbers[i]));
    return json{{"s", sol.s}, {"Y_s", sol.Y_s}, {"se", sol.Y_s_se}, {"iterations", sol.iterations}, {"picard_deltas", sol.picard_deltas},
                {"condition_numbers", cn}, {"warnings", sol.warnings}};
}

inline std::uint64_t condition_seed(const ExperimentConfig& c, std::size_t index) { return derive_seed(c.seed, index); }

}  // namespace detail

/// Empirical-vs-analytic mean and covariance of simulated paths.
inline int cmd_simulate(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
    fs::create_directories(out);
    const int d = c.dim();
    const std::size_t P = c.grid.size(), N = c.simulate.paths;
    const auto D = static_cast<Eigen::Index>(P * static_cast<std::size_t>(d));
    SamplerOptions opt;
    opt.scheme = c.solver.scheme;
    const VolterraSampler sampler(c.kernel, c.drift, c.grid, opt);
    json summary{{"experiment", detail::experiment_json(c)}, {"N", N}, {"sigmas", c.simulate.sigmas}};
    json conds = json::array();
    bool all_pass = true;
    for (std::size_t ci = 0; ci < c.conditions.size(); ++ci) {
        const auto& spec = c.conditions[ci];
        const ConditionData cond = resolve_condition(spec, c.grid, d, c.seed);
        const PathBatch batch = sampler.sample(cond, N, detail::condition_seed(c, ci));
        if (c.simulate.write_paths) {
            if (c.simulate.format == SimulateKnobs::Format::csv) {
                auto f = detail::open_out(out / ("paths_" + spec.id + ".csv"));
                write_paths_csv(f, batch);
            } else {
                auto f = detail::open_out(out / ("paths_" + spec.id + ".bin"), true);
                write_paths_binary(f, batch);
            }
        }
        // N x (P d) sample matrix, centered
        Matrix X(static_cast<Eigen::Index>(N), D);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < P; ++i) X.row(static_cast<Eigen::Index>(n)).segment(static_cast<Eigen::Index>(i) * d, d) = batch.value(n, i).transpose();
        const Vector mean = X.colwise().mean().transpose();
        X.rowwise() -= mean.transpose();
        const double Nd = static_cast<double>(N);
        const Matrix cov = X.transpose() * X / (Nd - 1.0);
        const Matrix X2 = X.array().square().matrix();
        const Matrix m4 = X2.transpose() * X2 / Nd;
        const double s = cond.trivial() ? 0.0 : cond.s;
        const double tol = 1e-10;

        double worst_cov = 0.0, worst_mean = 0.0;
        {
            auto f = detail::open_out(out / ("mean_" + spec.id + ".csv"));
            f << "i,component,t,empirical,analytic,se,z,flag\n";
            for (std::size_t i = 0; i < P; ++i) {
                const Vector mu = conditional_mean(c.kernel, c.drift, cond, c.grid[i], c.solver.scheme);
                for (int a = 0; a < d; ++a) {
                    const auto r = static_cast<Eigen::Index>(i) * d + a;
                    const double se = std::sqrt(cov(r, r) / Nd);
                    const double diff = mean(r) - mu(a);
                    const double floor = tol * (1.0 + std::abs(mu(a)));
                    const double z = (se > 0 && std::abs(diff) > floor) ? diff / se : 0.0;
                    const bool ok = std::abs(diff) <= c.simulate.sigmas * se + floor;
                    worst_mean = std::max(worst_mean, std::abs(z));
                    all_pass = all_pass && ok;
                    f << i << ',' << (a + 1) << ',' << fmt17(c.grid[i]) << ',' << fmt17(mean(r)) << ',' << fmt17(mu(a)) << ',' << fmt17(se) << ','
                      << fmt17(z) << ',' << (ok ? "PASS" : "FAIL") << '\n';
                }
            }
        }
        bool cond_pass = true;
        {
            auto f = detail::open_out(out / ("covariance_" + spec.id + ".csv"));
            f << "i,j,a,b,t_i,t_j,empirical,analytic,se,z,flag\n";
            for (std::size_t i = 0; i < P; ++i)
                for (std::size_t j = i; j < P; ++j) {
                    const Matrix an = cov_cs(c.kernel, s, c.grid[i], c.grid[j]);
                    for (int a = 0; a < d; ++a)
                        for (int b = 0; b < d; ++b) {
                            const auto r = static_cast<Eigen::Index>(i) * d + a, q = static_cast<Eigen::Index>(j) * d + b;
                            const double emp = cov(r, q);
                            const double se = std::sqrt(std::max(0.0, m4(r, q) - emp * emp) / Nd);
                            const double diff = emp - an(a, b);
                            const double floor = tol * (1.0 + std::abs(an(a, b)));
                            const double z = (se > 0 && std::abs(diff) > floor) ? diff / se : 0.0;
                            const bool ok = std::abs(diff) <= c.simulate.sigmas * se + floor;
                            worst_cov = std::max(worst_cov, std::abs(z));
                            cond_pass = cond_pass && ok;
                            f << i << ',' << j << ',' << (a + 1) << ',' << (b + 1) << ',' << fmt17(c.grid[i]) << ',' << fmt17(c.grid[j]) << ','
                              << fmt17(emp) << ',' << fmt17(an(a, b)) << ',' << fmt17(se) << ',' << fmt17(z) << ',' << (ok ? "PASS" : "FAIL") << '\n';
                        }
                }
        }
        all_pass = all_pass && cond_pass;
        conds.push_back(json{{"condition", detail::condition_json(spec)}, {"max_abs_z_covariance", worst_cov}, {"max_abs_z_mean", worst_mean},
                             {"covariance_pass", cond_pass}});
        log << "simulate " << spec.id << ": N=" << N << " max|z| cov " << worst_cov << " mean " << worst_mean << (cond_pass ? " PASS" : " FAIL") << '\n';
    }
    summary["conditions"] = conds;
    summary["pass"] = all_pass;
    detail::write_json(out / "simulate.json", summary);
    return all_pass ? kExitOk : kExitVerify;
}

inline int cmd_check_hypotheses(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
    fs::create_directories(out);
    const auto r = check_hypotheses(c.kernel, c.drift, c.grid, c.hypothesis_tol);
    json j{{"experiment", detail::experiment_json(c)},
           {"k_bound", detail::num(r.k_bound)},
           {"b_bound", detail::num(r.b_bound)},
           {"max_right_derivative_k", detail::num(r.max_right_derivative_k)},
           {"max_right_derivative_b", detail::num(r.max_right_derivative_b)},
           {"diagonal_probes", r.diagonal_probes},
           {"beta_continuity_defect", detail::num(r.beta_continuity_defect)},
           {"beta_continuity_defect_fine", detail::num(r.beta_continuity_defect_fine)},
           {"m_op", detail::num(r.m_op)},
           {"k_bounded", r.k_bounded},
           {"b_bounded", r.b_bounded},
           {"right_derivative_bounded", r.right_derivative_bounded},
           {"beta_continuous", r.beta_continuous},
           {"experimental", r.experimental},
           {"all_pass", r.all_pass()},
           {"notes", r.notes}};
    json dk = json::array(), ok = json::array();
    for (double v : r.diagonal_derivative_k) dk.push_back(detail::num(v));
    for (double v : r.origin_values_k) ok.push_back(detail::num(v));
    j["diagonal_derivative_k"] = dk;
    j["origin_values_k"] = ok;
    detail::write_json(out / "hypotheses.json", j);
    log << "check-hypotheses: " << (r.all_pass() ? "all pass" : (r.experimental ? "outside hypotheses (experimental)" : "FAIL")) << '\n';
    for (const auto& n : r.notes) log << "  " << n << '\n';
    return (r.all_pass() || r.experimental) ? kExitOk : kExitVerify;
}

inline int cmd_solve(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
    fs::create_directories(out);
    const auto kind = detail::pick_oracle(c);
    json summary{{"experiment", detail::experiment_json(c)}, {"N", c.solver.paths}, {"oracle", detail::to_string(kind)}};
    json sols = json::array();
    for (std::size_t ci = 0; ci < c.conditions.size(); ++ci) {
        const auto& spec = c.conditions[ci];
        const ConditionData cond = resolve_condition(spec, c.grid, c.dim(), c.seed);
        const BsdeSolution sol = picard_solve(make_problem(c, cond, c.grid, c.solver.paths), detail::condition_seed(c, ci));
        detail::write_solution_csv(out / ("solution_" + spec.id + ".csv"), sol, c.solver.export_paths);
        json j = detail::solution_json(sol);
        j["condition"] = detail::condition_json(spec);
        if (const auto o = detail::oracle_value(c, kind, cond, c.solver.scheme)) {
            j["oracle"] = *o;
            j["diff"] = sol.Y_s - *o;
        }
        if (ci == 0 && spec.s == 0.0) summary["Y_0"] = sol.Y_s;
        sols.push_back(j);
        log << "solve-bsde " << spec.id << ": Y_s = " << fmt17(sol.Y_s) << " +- " << fmt17(sol.Y_s_se) << " (" << sol.iterations << " iterations)\n";
    }
    summary["solutions"] = sols;
    detail::write_json(out / "bsde.json", summary);
    return kExitOk;
}

inline int cmd_verify(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
    fs::create_directories(out);
    const auto kind = detail::pick_oracle(c);
    const double rel = kind == detail::OracleKind::pde ? std::max(c.verify.tolerance, 0.02) : c.verify.tolerance;
    MildOptions mo;
    mo.inner_paths = c.verify.inner;
    mo.outer_points = c.verify.outer;
    mo.sigmas = c.verify.sigmas;
    json reports = json::array();
    auto table = detail::open_out(out / "mild.csv");
    table << "s,eta_id,residual1,se1,allowance1,residual2,se2,allowance2,oracle,solver,diff,pass\n";
    bool all_pass = true;
    for (std::size_t ci = 0; ci < c.conditions.size(); ++ci) {
        const auto& spec = c.conditions[ci];
        const ConditionData cond = resolve_condition(spec, c.grid, c.dim(), c.seed);
        const BsdeProblem p = make_problem(c, cond, c.grid, c.solver.paths);
        auto sol = std::make_shared<const BsdeSolution>(picard_solve(p, detail::condition_seed(c, ci)));
        const RegressionSurrogate sur(p, sol);
        const MildReport rep = mild_residuals(sur, c.kernel, c.drift, c.driver, cond, c.grid, mo, derive_seed(c.seed, 0x6d696c64 + ci));
        bool pass = rep.pass();
        json j{{"condition", detail::condition_json(spec)},
               {"s", rep.s},
               {"inner_paths", rep.inner_paths},
               {"outer_times", rep.outer_times},
               {"Y_s", rep.y_s},
               {"Y_s_se", rep.y_s_se},
               {"exact", rep.exact},
               {"line1", {{"residual", rep.line1.residual}, {"se", rep.line1.se}, {"allowance", rep.line1.allowance}, {"pass", rep.line1.within(mo.sigmas)}}}};
        json l2 = json::array();
        for (const auto& l : rep.line2) l2.push_back({{"residual", l.residual}, {"se", l.se}, {"allowance", l.allowance}, {"pass", l.within(mo.sigmas)}});
        j["line2"] = l2;
        double oracle = std::numeric_limits<double>::quiet_NaN();
        if (const auto o = detail::oracle_value(c, kind, cond, c.solver.scheme)) {
            oracle = *o;
            const double diff = sol->Y_s - oracle;
            const bool agree = std::abs(diff) <= std::max(mo.sigmas * sol->Y_s_se, rel * std::abs(oracle));
            j["oracle"] = {{"kind", detail::to_string(kind)}, {"value", oracle}, {"diff", diff}, {"pass", agree}};
            pass = pass && agree;
        }
        j["pass"] = pass;
        all_pass = all_pass && pass;
        reports.push_back(j);
        table << fmt17(rep.s) << ',' << spec.id << ',' << fmt17(rep.line1.residual) << ',' << fmt17(rep.line1.se) << ',' << fmt17(rep.line1.allowance) << ','
              << fmt17(rep.line2[0].residual) << ',' << fmt17(rep.line2[0].se) << ',' << fmt17(rep.line2[0].allowance) << ',' << fmt17(oracle) << ','
              << fmt17(sol->Y_s) << ',' << fmt17(sol->Y_s - oracle) << ',' << (pass ? "PASS" : "FAIL") << '\n';
        log << "verify-mild " << spec.id << ": line1 " << rep.line1.residual << " (se " << rep.line1.se << "), line2 " << rep.line2[0].residual << " (se "
            << rep.line2[0].se << ")" << (pass ? " PASS" : " FAIL") << '\n';
    }
    detail::write_json(out / "mild.json", json{{"experiment", detail::experiment_json(c)}, {"reports", reports}, {"pass", all_pass}});
    return all_pass ? kExitOk : kExitVerify;
}

inline int cmd_converge(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
    fs::create_directories(out);
    const auto kind = detail::pick_oracle(c);
    const auto& spec = c.conditions.front();
    auto table = detail::open_out(out / "converge.csv");
    table << "M,N,dt,Y,se,oracle,error,rel_error,iterations,delta_ratio\n";
    json rungs = json::array();
    double C = 0.0;
    for (std::size_t r = 0; r < c.converge.M.size(); ++r) {
        const std::size_t M = c.converge.M[r];
        const std::size_t N = c.converge.N.size() == 1 ? c.converge.N[0] : c.converge.N[r];
        const Grid grid = Grid::uniform(M, c.T);
        if (spec.s != 0.0 && !grid.index_of(spec.s)) throw ConfigError("converge.M", "conditioning time is not a node of the M = " + std::to_string(M) + " grid");
        for (double a : c.terminal.anchors())
            if (!grid.index_of(a)) throw ConfigError("converge.M", "terminal anchor is not a node of the M = " + std::to_string(M) + " grid");
        const ConditionData cond = resolve_condition(spec, grid, c.dim(), c.seed);
        const BsdeSolution sol = picard_solve(make_problem(c, cond, grid, N), derive_seed(c.seed, 0x636f6e76 + r));
        const auto o = detail::oracle_value(c, kind, cond, c.solver.scheme);
        const double oracle = o ? *o : std::numeric_limits<double>::quiet_NaN();
        const double err = sol.Y_s - oracle;
        const double dt = c.T / static_cast<double>(M);
        if (o) C = std::max(C, std::max(0.0, std::abs(err) - 3.0 * sol.Y_s_se) / dt);
        double ratio = std::numeric_limits<double>::quiet_NaN();
        if (sol.picard_deltas.size() >= 2) {
            double acc = 0.0;
            int cnt = 0;
            for (std::size_t k = 1; k < sol.picard_deltas.size(); ++k)
                if (sol.picard_deltas[k - 1] > 0) {
                    acc += sol.picard_deltas[k] / sol.picard_deltas[k - 1];
                    ++cnt;
                }
            if (cnt) ratio = acc / cnt;
        }
        const double relerr = o && *o != 0.0 ? err / std::abs(*o) : std::numeric_limits<double>::quiet_NaN();
        table << M << ',' << N << ',' << fmt17(dt) << ',' << fmt17(sol.Y_s) << ',' << fmt17(sol.Y_s_se) << ',' << fmt17(oracle) << ',' << fmt17(err) << ','
              << fmt17(relerr) << ',' << sol.iterations << ',' << fmt17(ratio) << '\n';
        rungs.push_back(json{{"M", M}, {"N", N}, {"dt", dt}, {"Y", sol.Y_s}, {"se", sol.Y_s_se}, {"oracle", detail::num(oracle)}, {"error", detail::num(err)},
                             {"rel_error", detail::num(relerr)}, {"picard_deltas", sol.picard_deltas}, {"delta_ratio", detail::num(ratio)}});
        log << "converge M=" << M << " N=" << N << ": Y = " << fmt17(sol.Y_s) << " error " << err << '\n';
    }
    detail::write_json(out / "converge.json", json{{"experiment", detail::experiment_json(c)}, {"oracle", detail::to_string(kind)}, {"rungs", rungs},
                                                  {"C", C}, {"condition", detail::condition_json(spec)}});
    return kExitOk;
}

}  // namespace volterra::cli
