#pragma once

#include "volterra/core.hpp"
#include "volterra/expr.hpp"
#include "volterra/funcalc.hpp"
#include "volterra/gauss_cond.hpp"
#include "volterra/regression.hpp"
#include "volterra/rng.hpp"

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace volterra {

/// Driver f(t, y, z, m, x) of the BSDE, with z, m = m^T_t and x = X_t in R^d.
class DriverSpec {
public:
    using Fn = std::function<double(double t, double y, const double* z, const double* m, const double* x)>;

    DriverSpec() : DriverSpec(zero(1)) {}

    static DriverSpec zero(int dim) {
        DriverSpec f(dim);
        f.fn_ = [](double, double, const double*, const double*, const double*) { return 0.0; };
        f.zero_ = true;
        f.uses_yz_ = false;
        f.uses_state_ = false;
        f.text_ = "0";
        f.lipschitz_ = 0.0;
        return f;
    }

    /// Variable names: t, y, then z, m, x for d = 1 or z1..zd, m1..md, x1..xd.
    static std::vector<std::string> variable_names(int dim) {
        std::vector<std::string> v{"t", "y"};
        for (const char* base : {"z", "m", "x"}) {
            if (dim == 1) v.emplace_back(base);
            else
                for (int i = 1; i <= dim; ++i) v.push_back(std::string(base) + std::to_string(i));
        }
        return v;
    }

    static DriverSpec expression(std::string_view text, int dim, double lipschitz) {
        DriverSpec f(dim);
        auto e = std::make_shared<Expression>(Expression::parse(text, variable_names(dim)));
        f.zero_ = e->is_zero();
        f.uses_yz_ = e->depends_on(1);
        for (int i = 0; i < dim; ++i) f.uses_yz_ = f.uses_yz_ || e->depends_on(2 + i);
        f.uses_state_ = false;
        for (int i = 0; i < 2 * dim; ++i) f.uses_state_ = f.uses_state_ || e->depends_on(2 + dim + i);
        f.fn_ = [e, dim](double t, double y, const double* z, const double* m, const double* x) {
            std::array<double, 2 + 3 * 8> buf{};
            std::vector<double> big;
            double* v = buf.data();
            if (dim > 8) {
                big.resize(static_cast<std::size_t>(2 + 3 * dim));
                v = big.data();
            }
            v[0] = t;
            v[1] = y;
            for (int i = 0; i < dim; ++i) {
                v[2 + i] = z[i];
                v[2 + dim + i] = m[i];
                v[2 + 2 * dim + i] = x[i];
            }
            return (*e)(std::span<const double>(v, static_cast<std::size_t>(2 + 3 * dim)));
        };
        f.text_ = std::string(text);
        f.lipschitz_ = lipschitz;
        return f;
    }

    static DriverSpec callable(Fn fn, int dim, double lipschitz, bool uses_yz = true, std::string name = "callable") {
        DriverSpec f(dim);
        f.fn_ = std::move(fn);
        f.uses_yz_ = uses_yz;
        f.text_ = std::move(name);
        f.lipschitz_ = lipschitz;
        return f;
    }

    double operator()(double t, double y, const double* z, const double* m, const double* x) const { return fn_(t, y, z, m, x); }
    int dim() const noexcept { return dim_; }
    bool is_zero() const noexcept { return zero_; }
    /// False when f does not depend on (y, z); Picard then stops after one
    /// confirming iteration.
    bool depends_on_yz() const noexcept { return uses_yz_; }
    /// True when f reads m or x.
    bool depends_on_state() const noexcept { return uses_state_; }
    double lipschitz() const noexcept { return lipschitz_; }
    const std::string& text() const noexcept { return text_; }

private:
    explicit DriverSpec(int dim) : dim_(dim) {}

    int dim_;
    Fn fn_;
    bool zero_ = false;
    bool uses_yz_ = true;
    bool uses_state_ = true;
    std::string text_;
    double lipschitz_ = 0.0;
};

/// Largest observed |f(y',z') - f(y,z)| / (|y'-y| + |z'-z|_1) over random
/// probes with (t, m, x) drawn around the origin.
inline double probe_lipschitz(const DriverSpec& f, double horizon, std::size_t probes, std::uint64_t seed) {
    const int d = f.dim();
    double worst = 0.0;
    std::vector<double> z1(static_cast<std::size_t>(d)), z2(z1), m(z1), x(z1);
    for (std::size_t p = 0; p < probes; ++p) {
        NormalStream g(seed, p, 0);
        const double t = horizon * std::abs(std::tanh(g()));
        const double y1 = 2 * g(), y2 = y1 + 0.1 * g();
        double dist = std::abs(y2 - y1);
        for (int i = 0; i < d; ++i) {
            z1[static_cast<std::size_t>(i)] = 2 * g();
            z2[static_cast<std::size_t>(i)] = z1[static_cast<std::size_t>(i)] + 0.1 * g();
            m[static_cast<std::size_t>(i)] = g();
            x[static_cast<std::size_t>(i)] = g();
            dist += std::abs(z2[static_cast<std::size_t>(i)] - z1[static_cast<std::size_t>(i)]);
        }
        if (dist == 0.0) continue;
        const double diff = std::abs(f(t, y2, z2.data(), m.data(), x.data()) - f(t, y1, z1.data(), m.data(), x.data()));
        worst = std::max(worst, diff / dist);
    }
    return worst;
}

/// Regression features available at a slice.
enum class FeatureKind { prediction, current_value, anchors };

struct FeatureSpec {
    std::vector<FeatureKind> kinds{FeatureKind::prediction};
    std::vector<double> anchor_times;  // used by FeatureKind::anchors
};

struct BsdeProblem {
    KernelSpec kernel;
    DriftSpec drift;
    ConditionData condition;
    FunctionalSpec terminal;
    DriverSpec driver;
    Grid grid;
    std::size_t paths = 10000;
    int degree = 2;
    double ridge = kDefaultRidge;
    int picard = 1;
    bool implicit = false;
    int batches = 8;
    FeatureSpec features;
    SamplerOptions sampler;
};

/// Regression model of one backward slice. Outputs: column 0 is
/// E[Y_{i+1} | F_i], columns 1..d are E[Y_{i+1} dB_i | F_i] (fitted on
/// the continuation residual).
struct SliceModel {
    RegressionFit fit;
    Matrix z_weight;  // Z = z_weight * Ztilde
    double dt = 0.0;
};

struct BsdeSolution {
    Grid grid;
    std::size_t paths = 0;
    int dim = 1;
    std::size_t s_index = 0;
    double s = 0.0;
    std::vector<double> Y;       // paths x (M+1)
    std::vector<double> Z;       // paths x (M+1) x d
    std::vector<double> Ztilde;  // paths x (M+1) x d
    std::vector<SliceModel> slices;  // one per interval; unused below s_index
    std::vector<double> condition_numbers;
    std::vector<double> picard_deltas;
    int iterations = 0;
    double Y_s = 0.0;
    double Y_s_se = 0.0;
    std::vector<std::string> warnings;
    std::shared_ptr<const PathBatch> batch;
    std::vector<double> prediction;  // m^T, laid out like batch values

    double y(std::size_t n, std::size_t i) const { return Y[n * grid.size() + i]; }
    Eigen::Map<const Vector> z(std::size_t n, std::size_t i) const { return {Z.data() + (n * grid.size() + i) * static_cast<std::size_t>(dim), dim}; }
    Eigen::Map<const Vector> z_tilde(std::size_t n, std::size_t i) const {
        return {Ztilde.data() + (n * grid.size() + i) * static_cast<std::size_t>(dim), dim};
    }
};

namespace detail {

inline SamplerOptions sampler_for(const BsdeProblem& p) {
    SamplerOptions o = p.sampler;
    for (double u : p.terminal.anchors()) o.anchors.push_back(u);
    for (double u : p.features.anchor_times) o.anchors.push_back(u);
    return o;
}

inline std::size_t feature_count(const BsdeProblem& p) {
    std::size_t n = 0;
    for (auto k : p.features.kinds) n += static_cast<std::size_t>(p.kernel.dim()) * (k == FeatureKind::anchors ? p.features.anchor_times.size() : 1);
    return n;
}

inline std::vector<std::size_t> feature_slots(const BsdeProblem& p, const PathBatch& batch) {
    std::vector<std::size_t> slots;
    for (double u : p.features.anchor_times) slots.push_back(*batch.anchor_slot(batch.grid().floor_index(u)) );
    return slots;
}

/// Raw features of path n at slice i.
inline void slice_features(const BsdeProblem& p, const PathBatch& batch, const std::vector<double>& mT, const std::vector<std::size_t>& slots,
                           std::size_t n, std::size_t i, double* out) {
    const int d = batch.dim();
    const std::size_t P = batch.grid().size();
    std::size_t k = 0;
    for (auto kind : p.features.kinds) {
        switch (kind) {
            case FeatureKind::prediction:
                for (int c = 0; c < d; ++c) out[k++] = mT[(n * P + i) * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
                break;
            case FeatureKind::current_value:
                for (int c = 0; c < d; ++c) out[k++] = batch.value(n, i)(c);
                break;
            case FeatureKind::anchors:
                for (std::size_t slot : slots) {
                    const Vector v = batch.lifted(n, i, slot);
                    for (int c = 0; c < d; ++c) out[k++] = v(c);
                }
                break;
        }
    }
}

inline double terminal_value(const FunctionalSpec& xi, const PathBatch& batch, std::size_t n) {
    const int d = batch.dim();
    Vector x(static_cast<Eigen::Index>(xi.arity()));
    for (std::size_t a = 0; a < xi.anchors().size(); ++a)
        x.segment(static_cast<Eigen::Index>(a) * d, d) = batch.value(n, batch.grid().floor_index(xi.anchors()[a]));
    return xi(batch.horizon(), {x.data(), static_cast<std::size_t>(x.size())});
}

/// Fixed-point passes and tolerance of the implicit scheme.
inline constexpr int kImplicitPasses = 10;
inline constexpr double kImplicitTol = 1e-10;

/// One backward sweep. With `frozen`, the driver is evaluated at the
/// previous iterate's (Y, Z) on each path (Picard step).
inline void backward_sweep(const BsdeProblem& p, const PathBatch& batch, const std::vector<double>& mT, const BsdeSolution* frozen,
                           BsdeSolution& sol, std::vector<double>& driver_integral) {
    const Grid& grid = batch.grid();
    const std::size_t N = batch.paths(), M = grid.intervals(), P = grid.size();
    const int d = batch.dim();
    const auto ud = static_cast<std::size_t>(d);
    const std::size_t si = batch.s_index();
    const std::size_t nf = feature_count(p);
    const auto slots = feature_slots(p, batch);

    for (std::size_t n = 0; n < N; ++n) {
        sol.Y[n * P + M] = terminal_value(p.terminal, batch, n);
        if (!std::isfinite(sol.Y[n * P + M])) throw NumericalError("terminal value is not finite on path " + std::to_string(n));
        driver_integral[n] = 0.0;
    }

    FeatureMatrix F(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(nf));
    Matrix targets(static_cast<Eigen::Index>(N), 1 + d);
    for (std::size_t step = M; step-- > si;) {
        const std::size_t i = step;
        const double ti = grid[i], dt = grid.width(i);
        const bool trivial = (i == si);
        const Eigen::Index cols = trivial ? 0 : static_cast<Eigen::Index>(nf);
        F.resize(static_cast<Eigen::Index>(N), cols);
        for (std::size_t n = 0; n < N; ++n) {
            if (!trivial) slice_features(p, batch, mT, slots, n, i, F.row(static_cast<Eigen::Index>(n)).data());
            targets(static_cast<Eigen::Index>(n), 0) = sol.Y[n * P + i + 1];
        }
        if (trivial) F.resize(static_cast<Eigen::Index>(N), 0);
        SliceModel model;
        model.dt = dt;
        // continuation first; Z then regresses (Y_{i+1} - continuation) dB,
        // which has the same mean and far less variance than Y_{i+1} dB
        const RegressionFit cont_fit = fit_regression(F, targets.leftCols(1), p.degree, p.ridge, i);
        {
            std::vector<double> row0(nf);
            for (std::size_t n = 0; n < N; ++n) {
                const double c0 = cont_fit.predict(trivial ? row0.data() : F.row(static_cast<Eigen::Index>(n)).data())(0);
                const double r = targets(static_cast<Eigen::Index>(n), 0) - c0;
                const auto db = batch.increment(n, i);
                for (int c = 0; c < d; ++c) targets(static_cast<Eigen::Index>(n), 1 + c) = r * db(c);
            }
        }
        model.fit = fit_regression(F, targets.rightCols(d), p.degree, p.ridge, i);
        model.fit.coeffs.conservativeResize(Eigen::NoChange, 1 + d);
        model.fit.coeffs.rightCols(d) = model.fit.coeffs.leftCols(d).eval();
        model.fit.coeffs.col(0) = cont_fit.coeffs.col(0);
        model.fit.condition = std::max(model.fit.condition, cont_fit.condition);
        model.z_weight = VolterraSampler::scheme_weight(p.kernel, p.sampler.scheme, ti, grid[i + 1], grid.horizon()).transpose();
        sol.condition_numbers[i] = model.fit.condition;

        std::vector<double> row(nf);
        for (std::size_t n = 0; n < N; ++n) {
            const Vector pred = model.fit.predict(trivial ? row.data() : F.row(static_cast<Eigen::Index>(n)).data());
            const double cont = pred(0);
            const Vector zt = pred.tail(d) / dt;
            const Vector z = model.z_weight.transpose() * zt;
            const double* m = mT.data() + (n * P + i) * ud;
            const double* x = batch.value(n, i).data();
            double f;
            if (frozen) {
                f = p.driver(ti, frozen->Y[n * P + i], frozen->Z.data() + (n * P + i) * ud, m, x);
            } else {
                f = p.driver(ti, cont, z.data(), m, x);
                if (p.implicit) {
                    double y = cont + f * dt;
                    for (int pass = 0; pass < kImplicitPasses; ++pass) {
                        f = p.driver(ti, y, z.data(), m, x);
                        const double next = cont + f * dt;
                        const bool done = std::abs(next - y) <= kImplicitTol * (1.0 + std::abs(y));
                        y = next;
                        if (done) break;
                    }
                }
            }
            if (!std::isfinite(f)) throw NumericalError("slice " + std::to_string(i) + ": non-finite driver value");
            sol.Y[n * P + i] = cont + f * dt;
            driver_integral[n] += f * dt;
            for (int c = 0; c < d; ++c) {
                sol.Ztilde[(n * P + i) * ud + static_cast<std::size_t>(c)] = zt(c);
                sol.Z[(n * P + i) * ud + static_cast<std::size_t>(c)] = z(c);
            }
        }
        sol.slices[i] = std::move(model);
    }
    // no forward data beyond T: reuse the last interval's Z
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < ud; ++c) {
            sol.Z[(n * P + M) * ud + c] = sol.Z[(n * P + M - 1) * ud + c];
            sol.Ztilde[(n * P + M) * ud + c] = sol.Ztilde[(n * P + M - 1) * ud + c];
        }
}

/// max over slices of the empirical L2 distance between two iterates.
inline double iterate_distance(const BsdeSolution& a, const BsdeSolution& b) {
    const std::size_t N = a.paths, P = a.grid.size();
    const auto ud = static_cast<std::size_t>(a.dim);
    double worst = 0.0;
    for (std::size_t i = a.s_index; i < P; ++i) {
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double dy = a.Y[n * P + i] - b.Y[n * P + i];
            acc += dy * dy;
            for (std::size_t c = 0; c < ud; ++c) {
                const double dz = a.Z[(n * P + i) * ud + c] - b.Z[(n * P + i) * ud + c];
                acc += dz * dz;
            }
        }
        worst = std::max(worst, std::sqrt(acc / static_cast<double>(N)));
    }
    return worst;
}

inline double solution_scale(const BsdeSolution& a) {
    const std::size_t N = a.paths, P = a.grid.size();
    double worst = 0.0;
    for (std::size_t i = a.s_index; i < P; ++i) {
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n) acc += a.Y[n * P + i] * a.Y[n * P + i];
        worst = std::max(worst, std::sqrt(acc / static_cast<double>(N)));
    }
    return worst;
}

/// Batch-split standard error of the mean of per-path values.
inline double batch_standard_error(const std::vector<double>& v, int batches) {
    const std::size_t N = v.size();
    const std::size_t K = std::max<std::size_t>(2, std::min<std::size_t>(static_cast<std::size_t>(std::max(batches, 2)), N));
    if (N < 2) return 0.0;
    std::vector<double> means(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t lo = k * N / K, hi = (k + 1) * N / K;
        double s = 0.0;
        for (std::size_t n = lo; n < hi; ++n) s += v[n];
        means[k] = s / static_cast<double>(hi - lo);
    }
    double mu = 0.0;
    for (double m : means) mu += m;
    mu /= static_cast<double>(K);
    double var = 0.0;
    for (double m : means) var += (m - mu) * (m - mu);
    var /= static_cast<double>(K - 1);
    return std::sqrt(var / static_cast<double>(K));
}

inline BsdeSolution empty_solution(const PathBatch& batch) {
    BsdeSolution sol;
    sol.grid = batch.grid();
    sol.paths = batch.paths();
    sol.dim = batch.dim();
    sol.s_index = batch.s_index();
    sol.s = batch.s();
    const std::size_t P = batch.grid().size(), N = batch.paths();
    const auto ud = static_cast<std::size_t>(batch.dim());
    sol.Y.assign(N * P, std::numeric_limits<double>::quiet_NaN());
    sol.Z.assign(N * P * ud, std::numeric_limits<double>::quiet_NaN());
    sol.Ztilde.assign(N * P * ud, std::numeric_limits<double>::quiet_NaN());
    sol.slices.resize(batch.grid().intervals());
    sol.condition_numbers.assign(batch.grid().intervals(), std::numeric_limits<double>::quiet_NaN());
    return sol;
}

inline void validate(const BsdeProblem& p) {
    const int d = p.kernel.dim();
    if (p.drift.dim() != d) throw ConfigError("drift", "drift dimension differs from kernel dimension");
    if (p.terminal.dim() != d) throw ConfigError("terminal", "terminal functional dimension differs from kernel dimension");
    if (p.driver.dim() != d) throw ConfigError("driver", "driver dimension differs from kernel dimension");
    if (p.paths < 2) throw ConfigError("solver.N", "need at least two paths");
    if (p.picard < 1) throw ConfigError("solver.picard", "Picard iteration count must be >= 1");
    if (p.features.kinds.empty()) throw ConfigError("driver.features", "at least one feature kind is required");
}

}  // namespace detail

/// Backward least-squares Monte Carlo, with an outer Picard loop when
/// problem.picard > 1. Iteration 1 is the plain backward scheme; later
/// iterations freeze the driver at the previous (Y, Z).
inline BsdeSolution picard_solve(const BsdeProblem& p, std::uint64_t seed) {
    detail::validate(p);
    VolterraSampler sampler(p.kernel, p.drift, p.grid, detail::sampler_for(p));
    auto batch = std::make_shared<PathBatch>(sampler.sample(p.condition, p.paths, seed));
    std::vector<double> mT = prediction_process(*batch);
    std::vector<double> integral(p.paths);

    BsdeSolution sol = detail::empty_solution(*batch);
    detail::backward_sweep(p, *batch, mT, nullptr, sol, integral);
    sol.iterations = 1;
    int rising = 0;
    for (int it = 2; it <= p.picard; ++it) {
        BsdeSolution next = detail::empty_solution(*batch);
        std::vector<double> next_integral(p.paths);
        detail::backward_sweep(p, *batch, mT, &sol, next, next_integral);
        const double delta = detail::iterate_distance(next, sol);
        next.picard_deltas = sol.picard_deltas;
        next.picard_deltas.push_back(delta);
        next.iterations = it;
        const bool stop = delta <= 1e-6 * (1.0 + detail::solution_scale(next));
        if (next.picard_deltas.size() >= 2 && delta >= next.picard_deltas[next.picard_deltas.size() - 2]) {
            if (++rising >= 3) throw NumericalError("no contraction observed in Picard iteration");
        } else {
            rising = 0;
        }
        sol = std::move(next);
        integral = std::move(next_integral);
        if (stop) break;
    }

    const std::size_t P = p.grid.size();
    sol.Y_s = sol.Y[sol.s_index];
    std::vector<double> pathwise(p.paths);
    for (std::size_t n = 0; n < p.paths; ++n) pathwise[n] = sol.Y[n * P + P - 1] + integral[n];
    sol.Y_s_se = detail::batch_standard_error(pathwise, p.batches);
    for (std::size_t i = sol.s_index; i + 1 < P; ++i)
        if (sol.condition_numbers[i] > 1e10) sol.warnings.push_back("slice " + std::to_string(i) + " regression condition number above 1e10");
    sol.batch = batch;
    sol.prediction = std::move(mT);
    return sol;
}

/// Single backward sweep (problem.picard is ignored).
inline BsdeSolution solve_backward(BsdeProblem p, std::uint64_t seed) {
    p.picard = 1;
    return picard_solve(p, seed);
}

struct YEstimate {
    double s = 0.0;
    double value = 0.0;
    double se = 0.0;
};

/// Y_s(eta) for a family of conditions; one backward solve per condition,
/// seeded by derive_seed(seed, index). At s = T the value is xi(eta).
inline std::vector<YEstimate> evaluate_Y(const BsdeProblem& base, const std::vector<ConditionData>& conditions, std::uint64_t seed) {
    std::vector<YEstimate> out;
    for (std::size_t c = 0; c < conditions.size(); ++c) {
        BsdeProblem p = base;
        p.condition = conditions[c];
        const double T = p.grid.horizon();
        if (!conditions[c].trivial() && std::abs(conditions[c].s - T) <= kTimeEps * std::max(1.0, T)) {
            const int d = p.kernel.dim();
            Vector x(static_cast<Eigen::Index>(p.terminal.arity()));
            for (std::size_t a = 0; a < p.terminal.anchors().size(); ++a)
                x.segment(static_cast<Eigen::Index>(a) * d, d) =
                    VolterraSampler::conditional_mean(p.kernel, p.drift, conditions[c], p.terminal.anchors()[a], p.sampler.scheme);
            out.push_back({T, p.terminal(T, {x.data(), static_cast<std::size_t>(x.size())}), 0.0});
            continue;
        }
        const BsdeSolution sol = picard_solve(p, derive_seed(seed, c));
        out.push_back({conditions[c].s, sol.Y_s, sol.Y_s_se});
    }
    return out;
}

}  // namespace volterra
