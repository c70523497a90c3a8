#pragma once

// Experiment configuration: an INI-style text format with [section] headers
// and `key = value` lines. Sections and keys are checked against a fixed
// schema; `[condition]` may repeat. See docs/config.md for the grammar.

#include "volterra/bsde.hpp"
#include "volterra/core.hpp"
#include "volterra/funcalc.hpp"
#include "volterra/gauss_cond.hpp"
#include "volterra/grid.hpp"
#include "volterra/kernels.hpp"
#include "volterra/mild.hpp"
#include "volterra/rng.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace volterra {

/// One parsed section: ordered key/value pairs plus the source line of each.
struct RawSection {
    std::string name;
    std::map<std::string, std::string> values;
    std::map<std::string, int> lines;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto p = s.find(sep, start);
        out.push_back(trim(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
        if (p == std::string_view::npos) break;
        start = p + 1;
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || p != end || v.empty()) throw ConfigError(key, "expected a number, got '" + v + "'");
    return x;
}

inline long long to_int(const std::string& key, const std::string& v) {
    long long x = 0;
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || p != end || v.empty()) throw ConfigError(key, "expected an integer, got '" + v + "'");
    return x;
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v) {
    std::vector<double> out;
    if (trim(v).empty()) return out;
    for (const auto& item : split(v, ',')) out.push_back(to_double(key, item));
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ConfigError(key, "expected true or false, got '" + v + "'");
}

}  // namespace config_detail

/// Reads sections and keys; rejects malformed lines and duplicate keys.
inline std::vector<RawSection> parse_ini(std::istream& in) {
    using config_detail::trim;
    std::vector<RawSection> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno), "unterminated section header");
            out.push_back({trim(std::string_view(t).substr(1, t.size() - 2)), {}, {}});
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
        if (out.empty()) throw ConfigError("line " + std::to_string(lineno), "key outside of any section");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
        auto& sec = out.back();
        if (sec.values.count(key)) throw ConfigError(sec.name + "." + key, "duplicate key");
        sec.values[key] = trim(std::string_view(t).substr(eq + 1));
        sec.lines[key] = lineno;
    }
    return out;
}

/// Source of the conditioning path.
struct ConditionSpec {
    enum class Source { none, observed, simulated };
    Source source = Source::none;
    double s = 0.0;
    std::vector<double> times;
    Matrix values;            // observed values, one row per time
    std::uint64_t seed = 0;   // simulated prefix sub-seed
    std::string id;
};

struct SolverKnobs {
    std::size_t paths = 10000;
    int degree = 2;
    double ridge = kDefaultRidge;
    int picard = 1;
    bool implicit = false;
    int batches = 8;
    WienerScheme scheme = WienerScheme::exact_block;
    std::size_t export_paths = 100;
    FeatureSpec features;
};

struct VerifyKnobs {
    std::size_t inner = 10000;
    std::size_t outer = 16;
    double sigmas = 3.0;
    enum class Oracle { automatic, gaussian, pde, none } oracle = Oracle::automatic;
    double tolerance = 0.01;  // relative floor of the oracle agreement test
};

struct SimulateKnobs {
    std::size_t paths = 10000;
    enum class Format { csv, binary } format = Format::csv;
    bool write_paths = true;
    double sigmas = 5.0;
};

struct ConvergeKnobs {
    std::vector<std::size_t> M;
    std::vector<std::size_t> N;
};

struct ExperimentConfig {
    std::string source;  // path of the config file, for messages
    std::uint64_t seed = 0;
    std::string out = "out";
    KernelSpec kernel;
    DriftSpec drift;
    Grid grid;
    std::size_t M = 0;
    double T = 1.0;
    std::vector<ConditionSpec> conditions;
    FunctionalSpec terminal;
    std::string terminal_text;
    DriverSpec driver;
    double lipschitz = 0.0;
    SolverKnobs solver;
    VerifyKnobs verify;
    SimulateKnobs simulate;
    ConvergeKnobs converge;
    double hypothesis_tol = 0.1;

    int dim() const { return kernel.dim(); }
};

namespace config_detail {

using Schema = std::map<std::string, std::set<std::string>>;

inline const Schema& schema() {
    static const Schema s{
        {"run", {"seed", "out"}},
        {"kernel", {"dim", "diag"}},  // plus k_i_j overrides
        {"drift", {"b"}},
        {"grid", {"M", "T"}},
        {"condition", {"s", "source", "times", "values", "seed", "id"}},
        {"terminal", {"anchors", "expr"}},
        {"driver", {"f", "lipschitz", "features", "anchor_times"}},
        {"solver", {"N", "degree", "ridge", "picard", "implicit", "batches", "scheme", "export_paths"}},
        {"verify", {"inner", "outer", "sigmas", "oracle", "tolerance"}},
        {"simulate", {"N", "format", "write_paths", "sigmas"}},
        {"converge", {"M", "N"}},
        {"hypotheses", {"tol"}},
    };
    return s;
}

inline void check_schema(const std::vector<RawSection>& secs) {
    static const std::regex override_key(R"(k_[0-9]+_[0-9]+)");
    std::set<std::string> seen;
    for (const auto& sec : secs) {
        const auto it = schema().find(sec.name);
        if (it == schema().end()) throw ConfigError(sec.name, "unknown section");
        if (sec.name != "condition" && !seen.insert(sec.name).second) throw ConfigError(sec.name, "section appears twice");
        for (const auto& [k, v] : sec.values) {
            if (it->second.count(k)) continue;
            if (sec.name == "kernel" && std::regex_match(k, override_key)) continue;
            throw ConfigError(sec.name + "." + k, "unknown key");
        }
    }
}

class SectionView {
public:
    SectionView(const RawSection* sec, std::string name, std::filesystem::path base) : sec_(sec), name_(std::move(name)), base_(std::move(base)) {}

    bool has(const std::string& k) const { return sec_ && sec_->values.count(k); }
    std::string key(const std::string& k) const { return name_ + "." + k; }
    const std::string& str(const std::string& k) const {
        if (!has(k)) throw ConfigError(key(k), "required key missing");
        return sec_->values.at(k);
    }
    std::string str(const std::string& k, const std::string& def) const { return has(k) ? str(k) : def; }
    double num(const std::string& k) const { return to_double(key(k), str(k)); }
    double num(const std::string& k, double def) const { return has(k) ? num(k) : def; }
    long long integer(const std::string& k) const { return to_int(key(k), str(k)); }
    long long integer(const std::string& k, long long def) const { return has(k) ? integer(k) : def; }
    std::size_t count(const std::string& k, std::size_t def, std::size_t min = 1) const {
        const long long v = integer(k, static_cast<long long>(def));
        if (v < static_cast<long long>(min)) throw ConfigError(key(k), "must be at least " + std::to_string(min));
        return static_cast<std::size_t>(v);
    }
    bool flag(const std::string& k, bool def) const { return has(k) ? to_bool(key(k), str(k)) : def; }
    std::filesystem::path path(const std::string& raw) const {
        std::filesystem::path p(raw);
        return p.is_absolute() ? p : base_ / p;
    }
    const RawSection* raw() const { return sec_; }

private:
    const RawSection* sec_;
    std::string name_;
    std::filesystem::path base_;
};

/// `[scale*]family[(args)]` for one scalar kernel entry.
inline ScalarKernel parse_scalar_kernel(const std::string& key, const std::string& text, const SectionView& sec) {
    static const std::regex re(R"(^\s*(?:([-+0-9.eE]+)\s*\*\s*)?([a-z_]+)\s*(?:\((.*)\))?\s*$)");
    std::smatch m;
    if (!std::regex_match(text, m, re)) throw ConfigError(key, "cannot parse kernel '" + text + "'");
    const double scale = m[1].matched ? to_double(key, m[1].str()) : 1.0;
    const std::string fam = m[2].str();
    const std::string arg = m[3].matched ? trim(m[3].str()) : std::string();
    const auto need_arg = [&] {
        if (arg.empty()) throw ConfigError(key, "kernel family '" + fam + "' needs an argument");
    };
    try {
        if (fam == "zero") return ScalarKernel::zero();
        if (fam == "brownian") return ScalarKernel::brownian(scale);
        if (fam == "exponential") {
            need_arg();
            return ScalarKernel::exponential(to_double(key, arg), scale);
        }
        if (fam == "fbm" || fam == "fbm_mg") {
            need_arg();
            return ScalarKernel::fbm(to_double(key, arg), scale);
        }
        if (fam == "table") {
            need_arg();
            return ScalarKernel::table(TableSamples::load_csv(sec.path(arg).string()), scale);
        }
    } catch (const DomainError& e) {
        throw ConfigError(key, e.what());
    }
    throw ConfigError(key, "unknown kernel family '" + fam + "'");
}

inline KernelSpec parse_kernel(const SectionView& sec) {
    const long long d = sec.integer("dim", 1);
    if (d < 1 || d > 16) throw ConfigError(sec.key("dim"), "dimension must lie in [1, 16]");
    const int dim = static_cast<int>(d);
    KernelSpec k = KernelSpec::diagonal(dim, parse_scalar_kernel(sec.key("diag"), sec.str("diag"), sec));
    if (sec.raw())
        for (const auto& [key, v] : sec.raw()->values) {
            if (key.rfind("k_", 0) != 0) continue;
            const auto parts = split(key, '_');
            const long long i = to_int(sec.key(key), parts[1]), j = to_int(sec.key(key), parts[2]);
            if (i < 1 || j < 1 || i > dim || j > dim) throw ConfigError(sec.key(key), "entry index outside 1..dim");
            k.set(static_cast<int>(i - 1), static_cast<int>(j - 1), parse_scalar_kernel(sec.key(key), v, sec));
        }
    return k;
}

inline DriftSpec parse_drift(const SectionView& sec, int dim) {
    const std::string text = sec.str("b", "zero");
    static const std::regex re(R"(^\s*([a-z]+)\s*(?:\((.*)\))?\s*$)");
    std::smatch m;
    if (!std::regex_match(text, m, re)) throw ConfigError(sec.key("b"), "cannot parse drift '" + text + "'");
    const std::string fam = m[1].str(), arg = m[2].matched ? m[2].str() : std::string();
    if (fam == "zero") return DriftSpec::zero(dim);
    if (fam == "constant") {
        const auto v = to_doubles(sec.key("b"), arg);
        if (static_cast<int>(v.size()) != dim) throw ConfigError(sec.key("b"), "constant drift needs dim entries");
        return DriftSpec::constant(Eigen::Map<const Vector>(v.data(), dim));
    }
    if (fam == "table") {
        std::vector<std::shared_ptr<const TableSamples>> tabs;
        try {
            for (const auto& f : split(arg, ',')) tabs.push_back(TableSamples::load_csv(sec.path(f).string()));
        } catch (const DomainError& e) {
            throw ConfigError(sec.key("b"), e.what());
        }
        if (static_cast<int>(tabs.size()) != dim) throw ConfigError(sec.key("b"), "table drift needs one file per component");
        return DriftSpec::table(std::move(tabs));
    }
    throw ConfigError(sec.key("b"), "unknown drift family '" + fam + "'");
}

/// Rows separated by ';', components by ','.
inline Matrix parse_rows(const std::string& key, const std::string& text, int dim) {
    const auto rows = split(text, ';');
    Matrix out(static_cast<Eigen::Index>(rows.size()), dim);
    if (dim == 1 && rows.size() == 1) {
        const auto v = to_doubles(key, text);
        out.resize(static_cast<Eigen::Index>(v.size()), 1);
        for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i), 0) = v[i];
        return out;
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto v = to_doubles(key, rows[r]);
        if (static_cast<int>(v.size()) != dim) throw ConfigError(key, "each row needs dim entries");
        for (int c = 0; c < dim; ++c) out(static_cast<Eigen::Index>(r), c) = v[static_cast<std::size_t>(c)];
    }
    return out;
}

inline ConditionSpec parse_condition(const SectionView& sec, int dim, std::size_t index) {
    ConditionSpec c;
    c.id = sec.str("id", "c" + std::to_string(index));
    c.s = sec.num("s", 0.0);
    const std::string src = sec.str("source", c.s == 0.0 ? "none" : "observed");
    if (src == "none") {
        c.source = ConditionSpec::Source::none;
        if (c.s != 0.0) throw ConfigError(sec.key("source"), "source 'none' requires s = 0");
    } else if (src == "observed") {
        c.source = ConditionSpec::Source::observed;
        c.times = to_doubles(sec.key("times"), sec.str("times"));
        c.values = parse_rows(sec.key("values"), sec.str("values"), dim);
        if (c.values.rows() != static_cast<Eigen::Index>(c.times.size())) throw ConfigError(sec.key("values"), "one value row per observation time required");
    } else if (src == "simulated") {
        c.source = ConditionSpec::Source::simulated;
        c.seed = static_cast<std::uint64_t>(sec.integer("seed", static_cast<long long>(index) + 1));
    } else {
        throw ConfigError(sec.key("source"), "expected none, observed or simulated");
    }
    return c;
}

/// Variable names of the terminal map for the given anchors and dimension.
inline std::vector<std::string> terminal_names(std::size_t anchors, int dim) {
    std::vector<std::string> n;
    if (anchors == 1 && dim == 1) return {"x"};
    for (std::size_t a = 0; a < anchors; ++a)
        for (int c = 0; c < dim; ++c) {
            if (anchors == 1) n.push_back("x" + std::to_string(c + 1));
            else if (dim == 1) n.push_back("x" + std::to_string(a + 1));
            else n.push_back("x" + std::to_string(a + 1) + "_" + std::to_string(c + 1));
        }
    return n;
}

inline FeatureSpec parse_features(const SectionView& sec) {
    FeatureSpec f;
    if (!sec.has("features")) return f;
    f.kinds.clear();
    for (const auto& item : split(sec.str("features"), ',')) {
        if (item == "prediction") f.kinds.push_back(FeatureKind::prediction);
        else if (item == "current_value") f.kinds.push_back(FeatureKind::current_value);
        else if (item == "anchors") f.kinds.push_back(FeatureKind::anchors);
        else throw ConfigError(sec.key("features"), "unknown feature '" + item + "'");
    }
    f.anchor_times = to_doubles(sec.key("anchor_times"), sec.str("anchor_times", ""));
    const bool wants = std::find(f.kinds.begin(), f.kinds.end(), FeatureKind::anchors) != f.kinds.end();
    if (wants && f.anchor_times.empty()) throw ConfigError(sec.key("anchor_times"), "required when features include anchors");
    return f;
}

inline std::vector<std::size_t> to_counts(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& item : split(text, ',')) {
        const long long v = to_int(key, item);
        if (v < 1) throw ConfigError(key, "entries must be positive");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

}  // namespace config_detail

/// Parses and validates a configuration. `base` resolves relative table paths.
inline ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base = ".") {
    using namespace config_detail;
    const auto secs = parse_ini(in);
    check_schema(secs);
    const auto find = [&](const std::string& name) -> const RawSection* {
        for (const auto& s : secs)
            if (s.name == name) return &s;
        return nullptr;
    };
    const auto view = [&](const std::string& name) { return SectionView(find(name), name, base); };

    ExperimentConfig c;
    const auto run = view("run");
    c.seed = static_cast<std::uint64_t>(run.integer("seed", 0));
    c.out = run.str("out", "out");

    const auto ks = view("kernel");
    if (!ks.raw()) throw ConfigError("kernel", "required section missing");
    c.kernel = parse_kernel(ks);
    const int d = c.kernel.dim();
    c.drift = parse_drift(view("drift"), d);

    const auto gs = view("grid");
    if (!gs.raw()) throw ConfigError("grid", "required section missing");
    c.M = gs.count("M", 0);
    c.T = gs.num("T");
    if (!(c.T > 0.0) || !std::isfinite(c.T)) throw ConfigError(gs.key("T"), "horizon must be positive");
    c.grid = Grid::uniform(c.M, c.T);

    std::size_t ci = 0;
    for (const auto& s : secs)
        if (s.name == "condition") {
            const SectionView v(&s, "condition", base);
            c.conditions.push_back(parse_condition(v, d, ci++));
            const double sv = c.conditions.back().s;
            if (sv < 0.0 || sv > c.T) throw ConfigError(v.key("s"), "conditioning time outside [0,T]");
            if (!c.grid.index_of(sv)) throw ConfigError(v.key("s"), "conditioning time must be a grid node");
        }
    if (c.conditions.empty()) c.conditions.push_back(ConditionSpec{ConditionSpec::Source::none, 0.0, {}, Matrix(), 0, "c0"});

    const auto ts = view("terminal");
    std::vector<double> anchors = to_doubles(ts.key("anchors"), ts.str("anchors", std::to_string(c.T)));
    if (anchors.empty()) anchors = {c.T};
    for (double a : anchors)
        if (a < 0.0 || a > c.T * (1 + kTimeEps)) throw ConfigError(ts.key("anchors"), "anchor outside [0,T]");
    c.terminal_text = ts.str("expr", "0");
    c.terminal = FunctionalSpec::expression(anchors, d, c.terminal_text, terminal_names(anchors.size(), d));

    const auto ds = view("driver");
    const std::string ftext = ds.str("f", "0");
    const auto probe = DriverSpec::expression(ftext, d, 0.0);
    c.lipschitz = ds.has("lipschitz") ? ds.num("lipschitz") : probe_lipschitz(probe, c.T, 4096, 0x6c6970);
    c.driver = DriverSpec::expression(ftext, d, c.lipschitz);

    const auto ss = view("solver");
    c.solver.paths = ss.count("N", 10000, 2);
    c.solver.degree = static_cast<int>(ss.integer("degree", 2));
    if (c.solver.degree < 0 || c.solver.degree > 8) throw ConfigError(ss.key("degree"), "must lie in [0, 8]");
    c.solver.ridge = ss.num("ridge", kDefaultRidge);
    if (c.solver.ridge < 0.0) throw ConfigError(ss.key("ridge"), "must be non-negative");
    c.solver.picard = static_cast<int>(ss.count("picard", 1));
    c.solver.implicit = ss.flag("implicit", false);
    c.solver.batches = static_cast<int>(ss.count("batches", 8, 2));
    const std::string scheme = ss.str("scheme", "exact_block");
    if (scheme == "exact_block") c.solver.scheme = WienerScheme::exact_block;
    else if (scheme == "left_point") c.solver.scheme = WienerScheme::left_point;
    else throw ConfigError(ss.key("scheme"), "expected exact_block or left_point");
    c.solver.export_paths = ss.count("export_paths", 100, 0);
    c.solver.features = parse_features(ds);

    const auto vs = view("verify");
    c.verify.inner = vs.count("inner", 10000, 2);
    c.verify.outer = vs.count("outer", 16);
    c.verify.sigmas = vs.num("sigmas", 3.0);
    c.verify.tolerance = vs.num("tolerance", 0.01);
    const std::string oracle = vs.str("oracle", "auto");
    if (oracle == "auto") c.verify.oracle = VerifyKnobs::Oracle::automatic;
    else if (oracle == "gaussian") c.verify.oracle = VerifyKnobs::Oracle::gaussian;
    else if (oracle == "pde") c.verify.oracle = VerifyKnobs::Oracle::pde;
    else if (oracle == "none") c.verify.oracle = VerifyKnobs::Oracle::none;
    else throw ConfigError(vs.key("oracle"), "expected auto, gaussian, pde or none");

    const auto sm = view("simulate");
    c.simulate.paths = sm.count("N", 10000, 2);
    const std::string fmt = sm.str("format", "csv");
    if (fmt == "csv") c.simulate.format = SimulateKnobs::Format::csv;
    else if (fmt == "binary") c.simulate.format = SimulateKnobs::Format::binary;
    else throw ConfigError(sm.key("format"), "expected csv or binary");
    c.simulate.write_paths = sm.flag("write_paths", true);
    c.simulate.sigmas = sm.num("sigmas", 5.0);

    const auto cv = view("converge");
    c.converge.M = cv.has("M") ? to_counts(cv.key("M"), cv.str("M")) : std::vector<std::size_t>{c.M};
    c.converge.N = cv.has("N") ? to_counts(cv.key("N"), cv.str("N")) : std::vector<std::size_t>{c.solver.paths};
    if (c.converge.N.size() != 1 && c.converge.N.size() != c.converge.M.size())
        throw ConfigError(cv.key("N"), "give one N or one per M rung");

    c.hypothesis_tol = view("hypotheses").num("tol", 0.1);
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("config", "cannot open " + file.string());
    auto c = parse_config(in, file.parent_path());
    c.source = file.string();
    return c;
}

/// Conditioning data for a condition on a given grid. A simulated prefix
/// draws Brownian increments keyed by the run seed and the condition's sub-seed.
inline ConditionData resolve_condition(const ConditionSpec& c, const Grid& grid, int dim, std::uint64_t run_seed) {
    switch (c.source) {
        case ConditionSpec::Source::none: return ConditionData::unconditioned();
        case ConditionSpec::Source::observed: return ConditionData::observed(c.s, c.times, c.values);
        case ConditionSpec::Source::simulated: {
            const std::size_t si = grid.require_index(c.s);
            if (si == 0) return ConditionData::unconditioned();
            std::vector<double> ends(grid.times().begin(), grid.times().begin() + static_cast<std::ptrdiff_t>(si + 1));
            Matrix dB(static_cast<Eigen::Index>(si), dim);
            for (std::size_t j = 0; j < si; ++j) {
                NormalStream g(derive_seed(run_seed, c.seed), 0, j);
                for (int k = 0; k < dim; ++k) dB(static_cast<Eigen::Index>(j), k) = std::sqrt(grid.width(j)) * g();
            }
            return ConditionData::from_increments(std::move(ends), std::move(dB));
        }
    }
    return ConditionData::unconditioned();
}

/// Solver problem for one condition of the experiment.
inline BsdeProblem make_problem(const ExperimentConfig& c, const ConditionData& cond, const Grid& grid, std::size_t paths) {
    BsdeProblem p;
    p.kernel = c.kernel;
    p.drift = c.drift;
    p.condition = cond;
    p.terminal = c.terminal;
    p.driver = c.driver;
    p.grid = grid;
    p.paths = paths;
    p.degree = c.solver.degree;
    p.ridge = c.solver.ridge;
    p.picard = c.solver.picard;
    p.implicit = c.solver.implicit;
    p.batches = c.solver.batches;
    p.features = c.solver.features;
    p.sampler.scheme = c.solver.scheme;
    return p;
}

}  // namespace volterra
