#pragma once

#include "volterra/bsde.hpp"
#include "volterra/funcalc.hpp"
#include "volterra/gauss_cond.hpp"
#include "volterra/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace volterra {

inline std::string fmt_number(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

inline Estimate mean_and_se(const std::vector<double>& v) {
    const auto N = static_cast<double>(v.size());
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= N;
    double var = 0.0;
    for (double x : v) var += (x - mu) * (x - mu);
    var = v.size() > 1 ? var / (N - 1.0) : 0.0;
    return {mu, std::sqrt(var / N)};
}

/// Path functional evaluated on path n of a batch.
using PathFunctional = std::function<double(const PathBatch&, std::size_t)>;

/// Monte-Carlo estimate of E^{s,eta}[G] with its standard error.
inline Estimate projector(const KernelSpec& k, const DriftSpec& b, const ConditionData& cond, const Grid& grid, const PathFunctional& G,
                          std::size_t N, std::uint64_t seed, SamplerOptions opt = {}) {
    const PathBatch batch = VolterraSampler(k, b, grid, std::move(opt)).sample(cond, N, seed);
    std::vector<double> v(N);
    for (std::size_t n = 0; n < N; ++n) v[n] = G(batch, n);
    return mean_and_se(v);
}

/// (Y, Z) evaluated on fresh paths at a grid slice.
class Surrogate {
public:
    struct Value {
        double y = 0.0;
        Vector z;
    };
    virtual ~Surrogate() = default;
    /// Sampler options the inner batch must use (anchors to track).
    virtual SamplerOptions sampler_options() const = 0;
    /// Y and Z on inner path n at grid index i; mT is the prediction process of the batch.
    virtual Value at(const PathBatch& batch, const std::vector<double>& mT, std::size_t n, std::size_t i) const = 0;
    virtual double terminal(const PathBatch& batch, std::size_t n) const = 0;
    /// Y_s(eta) and its standard error.
    virtual Estimate initial(const PathBatch& batch, const std::vector<double>& mT) const = 0;
    virtual std::string describe() const = 0;
};

/// Surrogate from a solved BSDE: the per-slice regressions applied to new paths.
class RegressionSurrogate final : public Surrogate {
public:
    RegressionSurrogate(BsdeProblem problem, std::shared_ptr<const BsdeSolution> sol) : p_(std::move(problem)), sol_(std::move(sol)) {}

    SamplerOptions sampler_options() const override { return detail::sampler_for(p_); }

    Value at(const PathBatch& batch, const std::vector<double>& mT, std::size_t n, std::size_t i) const override {
        const std::size_t M = batch.grid().intervals();
        if (i < sol_->s_index || i > M) throw DomainError("surrogate undefined at slice " + std::to_string(i));
        const int d = batch.dim();
        if (i == M) {
            // Z beyond the last interval reuses the last slice
            Value last = at(batch, mT, n, M - 1);
            return {detail::terminal_value(p_.terminal, batch, n), last.z};
        }
        const SliceModel& model = sol_->slices[i];
        if (model.fit.coeffs.size() == 0) throw DomainError("surrogate undefined at slice " + std::to_string(i));
        std::vector<double> raw(detail::feature_count(p_));
        if (i != sol_->s_index) {
            if (slots_.empty() && !p_.features.anchor_times.empty()) slots_ = detail::feature_slots(p_, batch);
            detail::slice_features(p_, batch, mT, slots_, n, i, raw.data());
        }
        const Vector pred = model.fit.predict(raw.data());
        const Vector z = model.z_weight.transpose() * (pred.tail(d) / model.dt);
        const double t = batch.grid()[i];
        const double* m = mT.data() + (n * batch.grid().size() + i) * static_cast<std::size_t>(d);
        const double* x = batch.value(n, i).data();
        double y = pred(0) + p_.driver(t, pred(0), z.data(), m, x) * model.dt;
        if (p_.implicit)
            for (int pass = 0; pass < detail::kImplicitPasses; ++pass) y = pred(0) + p_.driver(t, y, z.data(), m, x) * model.dt;
        return {y, z};
    }

    double terminal(const PathBatch& batch, std::size_t n) const override { return detail::terminal_value(p_.terminal, batch, n); }
    Estimate initial(const PathBatch&, const std::vector<double>&) const override { return {sol_->Y_s, sol_->Y_s_se}; }
    std::string describe() const override { return "regression"; }

private:
    BsdeProblem p_;
    std::shared_ptr<const BsdeSolution> sol_;
    mutable std::vector<std::size_t> slots_;
};

/// Surrogate from an analytic functional: Y = Phi, Z_j = Gamma(m^{T,j}, Phi).
class ClassicalSurrogate final : public Surrogate {
public:
    ClassicalSurrogate(FunctionalSpec phi, KernelSpec k, double horizon) : phi_(std::move(phi)), k_(std::move(k)), T_(horizon) {
        for (int j = 0; j < k_.dim(); ++j) mT_.push_back(FunctionalSpec::terminal_monomial(T_, 1, j, k_.dim()));
    }

    SamplerOptions sampler_options() const override { return SamplerOptions{WienerScheme::exact_block, phi_.anchors(), 1e-7}; }

    Value at(const PathBatch& batch, const std::vector<double>&, std::size_t n, std::size_t i) const override {
        const LiftedPath L = lift(batch, n, i);
        Value v;
        v.y = detail::call(phi_, L.t, anchor_values(phi_, L));
        v.z.resize(k_.dim());
        for (int j = 0; j < k_.dim(); ++j) v.z(j) = gamma(mT_[static_cast<std::size_t>(j)], phi_, k_, L);
        return v;
    }

    double terminal(const PathBatch& batch, std::size_t n) const override { return at(batch, {}, n, batch.grid().intervals()).y; }

    Estimate initial(const PathBatch& batch, const std::vector<double>& mT) const override {
        return {at(batch, mT, 0, batch.s_index()).y, 0.0};
    }
    std::string describe() const override { return "classical " + phi_.describe(); }

private:
    FunctionalSpec phi_;
    KernelSpec k_;
    double T_;
    std::vector<FunctionalSpec> mT_;
};

struct MildOptions {
    std::size_t inner_paths = 10000;
    std::size_t outer_points = 16;  // trapezoid intervals on [s, T]
    double sigmas = 3.0;            // pass threshold in combined standard errors
};

/// One line of the mild system: residual, Monte-Carlo SE and a time
/// quadrature allowance (Richardson estimate of the trapezoid error).
struct MildLine {
    // residual = lhs - (terminal - integral) for line 2, lhs - (terminal + integral) for line 1
    double lhs = 0.0;
    double terminal = 0.0;
    double integral = 0.0;
    double residual = 0.0;
    double se = 0.0;
    double allowance = 0.0;
    bool within(double sigmas) const { return std::abs(residual) <= sigmas * se + allowance; }
};

struct MildReport {
    double s = 0.0;
    std::size_t inner_paths = 0;
    std::vector<double> outer_times;
    double y_s = 0.0;
    double y_s_se = 0.0;
    MildLine line1;
    std::vector<MildLine> line2;  // one per component of m^T
    bool exact = false;            // s = T, no Monte Carlo
    double sigmas = 3.0;
    bool pass() const {
        if (!line1.within(sigmas)) return false;
        for (const auto& l : line2)
            if (!l.within(sigmas)) return false;
        return true;
    }
};

namespace detail {

inline std::vector<std::size_t> outer_indices(std::size_t si, std::size_t M, std::size_t points) {
    std::vector<std::size_t> idx;
    const std::size_t span = M - si;
    const std::size_t q = std::max<std::size_t>(1, std::min(points, span));
    for (std::size_t k = 0; k <= q; ++k) {
        const std::size_t i = si + (k * span + q / 2) / q;
        if (idx.empty() || idx.back() != i) idx.push_back(i);
    }
    idx.back() = M;
    return idx;
}

inline std::vector<double> trapezoid_weights(const Grid& grid, const std::vector<std::size_t>& idx) {
    std::vector<double> w(idx.size(), 0.0);
    for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
        const double h = grid[idx[k + 1]] - grid[idx[k]];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    return w;
}

/// Weights of the trapezoid rule on every other node (zero on skipped nodes).
inline std::vector<double> coarse_weights(const Grid& grid, const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> sub;
    std::vector<std::size_t> where;
    for (std::size_t k = 0; k < idx.size(); k += 2) {
        sub.push_back(idx[k]);
        where.push_back(k);
    }
    if (where.back() != idx.size() - 1) {
        sub.push_back(idx.back());
        where.push_back(idx.size() - 1);
    }
    const auto ws = trapezoid_weights(grid, sub);
    std::vector<double> w(idx.size(), 0.0);
    for (std::size_t k = 0; k < where.size(); ++k) w[where[k]] = ws[k];
    return w;
}

}  // namespace detail

/// Residuals of the two decoupled-mild lines at one (s, eta), using one
/// inner batch for every projector (common random numbers).
inline MildReport mild_residuals(const Surrogate& sur, const KernelSpec& k, const DriftSpec& b, const DriverSpec& f, const ConditionData& cond,
                                 const Grid& grid, const MildOptions& opt, std::uint64_t seed) {
    const int d = k.dim();
    const auto ud = static_cast<std::size_t>(d);
    const std::size_t M = grid.intervals(), P = grid.size();
    VolterraSampler sampler(k, b, grid, sur.sampler_options());
    const bool at_T = !cond.trivial() && grid.require_index(cond.s) == M;
    const std::size_t N = at_T ? 1 : opt.inner_paths;
    const PathBatch batch = sampler.sample(cond, N, seed);
    const std::vector<double> mT = prediction_process(batch);
    const std::size_t si = batch.s_index();

    MildReport rep;
    rep.s = batch.s();
    rep.inner_paths = N;
    rep.sigmas = opt.sigmas;
    const Estimate y0 = sur.initial(batch, mT);
    rep.y_s = y0.value;
    rep.y_s_se = y0.se;
    rep.line2.resize(ud);

    if (at_T) {
        // terminal condition: Y_T = xi and (Y m^T)_T = xi m^T_T, no integral
        rep.exact = true;
        rep.outer_times = {grid.horizon()};
        const double xi = sur.terminal(batch, 0);
        rep.line1.residual = y0.value - xi;
        for (std::size_t j = 0; j < ud; ++j) rep.line2[j].residual = (y0.value - xi) * mT[(P - 1) * ud + j];
        return rep;
    }

    const auto idx = detail::outer_indices(si, M, opt.outer_points);
    for (auto i : idx) rep.outer_times.push_back(grid[i]);
    const auto w = detail::trapezoid_weights(grid, idx);
    const auto wc = detail::coarse_weights(grid, idx);

    // per-path integrands: q1 = xi + int f, q2_j = xi m_T - int (Z_j - m_j f)
    std::vector<double> q1(N), c1(N), xi1(N), int1(N);
    std::vector<std::vector<double>> xi2(ud, std::vector<double>(N)), int2(ud, std::vector<double>(N));
    std::vector<std::vector<double>> q2(ud, std::vector<double>(N)), c2(ud, std::vector<double>(N));
    for (std::size_t n = 0; n < N; ++n) {
        const double xi = sur.terminal(batch, n);
        double i1 = 0.0, j1 = 0.0;
        std::vector<double> i2(ud, 0.0), j2(ud, 0.0);
        for (std::size_t k2 = 0; k2 < idx.size(); ++k2) {
            const std::size_t i = idx[k2];
            const auto v = sur.at(batch, mT, n, i);
            const double* m = mT.data() + (n * P + i) * ud;
            const double fv = f(grid[i], v.y, v.z.data(), m, batch.value(n, i).data());
            if (!std::isfinite(fv)) throw NumericalError("slice " + std::to_string(i) + ": non-finite driver value in mild residual");
            i1 += w[k2] * fv;
            j1 += wc[k2] * fv;
            for (std::size_t j = 0; j < ud; ++j) {
                const double g = v.z(static_cast<Eigen::Index>(j)) - m[j] * fv;
                if (!std::isfinite(g))
                    throw NumericalError("t = " + fmt_number(grid[i]) + ": non-finite Z in mild residual (kernel singular at this time; start at s > 0)");
                i2[j] += w[k2] * g;
                j2[j] += wc[k2] * g;
            }
        }
        q1[n] = xi + i1;
        c1[n] = i1 - j1;
        xi1[n] = xi;
        int1[n] = i1;
        for (std::size_t j = 0; j < ud; ++j) {
            const double mTT = mT[(n * P + M) * ud + j];
            q2[j][n] = xi * mTT - i2[j];
            xi2[j][n] = xi * mTT;
            int2[j][n] = i2[j];
            c2[j][n] = j2[j] - i2[j];
        }
    }
    const auto richardson = [](const std::vector<double>& c) { return std::abs(mean_and_se(c).value) / 3.0; };
    const auto mean_of = [](const std::vector<double>& v) { return mean_and_se(v).value; };

    const Estimate e1 = mean_and_se(q1);
    rep.line1.lhs = y0.value;
    rep.line1.terminal = mean_of(xi1);
    rep.line1.integral = mean_of(int1);
    rep.line1.residual = y0.value - e1.value;
    rep.line1.se = std::hypot(y0.se, e1.se);
    rep.line1.allowance = richardson(c1);
    for (std::size_t j = 0; j < ud; ++j) {
        const double ms = mT[(0 * P + si) * ud + j];  // deterministic under the conditioned law
        const Estimate e2 = mean_and_se(q2[j]);
        rep.line2[j].lhs = y0.value * ms;
        rep.line2[j].terminal = mean_of(xi2[j]);
        rep.line2[j].integral = mean_of(int2[j]);
        rep.line2[j].residual = y0.value * ms - e2.value;
        rep.line2[j].se = std::hypot(ms * y0.se, e2.se);
        rep.line2[j].allowance = richardson(c2[j]);
    }
    return rep;
}

/// Probabilists' Gauss-Hermite rule (weights sum to one) by Golub-Welsch.
inline std::pair<Vector, Vector> gauss_hermite(int order) {
    if (order < 1) throw DomainError("quadrature order must be positive");
    Matrix J = Matrix::Zero(order, order);
    for (int i = 1; i < order; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
    Eigen::SelfAdjointEigenSolver<Matrix> es(J);
    Vector w = es.eigenvectors().row(0).transpose().array().square();
    return {es.eigenvalues(), w / w.sum()};
}

/// Zero-driver Y_s(eta) = E^{s,eta}[g(X_T)] by tensor Gauss-Hermite quadrature.
inline double oracle_gaussian_terminal(const KernelSpec& k, const DriftSpec& b, const ConditionData& cond, double horizon,
                                       const std::function<double(const Vector&)>& g, int order = 40,
                                       WienerScheme scheme = WienerScheme::exact_block) {
    const int d = k.dim();
    if (d > 3) throw DomainError("Gaussian oracle supports d <= 3");
    const Vector mu = conditional_mean(k, b, cond, horizon, scheme);
    const double s = cond.trivial() ? 0.0 : cond.s;
    const Matrix C = cov_cs(k, s, horizon, horizon);
    Eigen::SelfAdjointEigenSolver<Matrix> es(C);
    const Matrix L = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    const auto [x, w] = gauss_hermite(order);
    std::vector<int> ix(static_cast<std::size_t>(d), 0);
    double acc = 0.0;
    Vector z(d);
    while (true) {
        double wt = 1.0;
        for (int c = 0; c < d; ++c) {
            z(c) = x(ix[static_cast<std::size_t>(c)]);
            wt *= w(ix[static_cast<std::size_t>(c)]);
        }
        acc += wt * g(mu + L * z);
        int c = 0;
        while (c < d && ++ix[static_cast<std::size_t>(c)] == order) ix[static_cast<std::size_t>(c++)] = 0;
        if (c == d) break;
    }
    return acc;
}

struct PdeOptions {
    int space_nodes = 801;
    double half_width_sigmas = 8.0;
    int time_steps = 400;  // over [0, T]; scaled to [s, T]
    double tol = 1e-10;
    int max_passes = 100;
};

struct PdeResult {
    double value = 0.0;
    double sigma = 0.0;
    double truncated_mass = 0.0;
    double max_passes_used = 0.0;
};

/// u(s, x0) for u_t + 1/2 k(T,t)^2 u_xx + f(t, u, k(T,t)^2 u_x) = 0,
/// u(T, .) = g, by Crank-Nicolson with a fixed point on the driver.
/// d = 1; the driver receives m = x - beta(T) and x as its last arguments.
inline PdeResult oracle_markovian_pde(const KernelSpec& k, double s, double x0, double beta_T, const std::function<double(double)>& g,
                                      const DriverSpec& f, double horizon, const PdeOptions& opt = {}) {
    if (k.dim() != 1 || f.dim() != 1) throw DomainError("PDE oracle requires d = 1");
    const double T = horizon;
    PdeResult res;
    const double var = cov_cs(k, s, T, T)(0, 0);
    res.sigma = std::sqrt(std::max(var, 0.0));
    const int steps = std::max(1, static_cast<int>(std::ceil(opt.time_steps * (T - s) / T - 1e-9)));
    if (T - s <= kTimeEps * std::max(1.0, T)) {
        res.value = g(x0);
        return res;
    }
    const double half = opt.half_width_sigmas * std::max(res.sigma, 1e-8);
    const int J = opt.space_nodes;
    const double h = 2.0 * half / (J - 1);
    res.truncated_mass = std::erfc(opt.half_width_sigmas / std::sqrt(2.0));

    std::vector<double> x(static_cast<std::size_t>(J)), u(x), rhs(x), un(x), prev(x);
    for (int j = 0; j < J; ++j) x[static_cast<std::size_t>(j)] = x0 - half + h * j;
    for (int j = 0; j < J; ++j) u[static_cast<std::size_t>(j)] = g(x[static_cast<std::size_t>(j)]);

    const double dt = (T - s) / steps;
    const auto diffusion = [&](double lo, double hi) { return kernel_product_integral(k, T, T, lo, hi)(0, 0) / (hi - lo); };
    const auto zcoef = [&](double t, double lo, double hi) {
        const double kk = k(T, t)(0, 0);
        return std::isfinite(kk) ? kk * kk : diffusion(lo, hi);
    };
    const auto fvec = [&](double t, double c, const std::vector<double>& v, std::vector<double>& out) {
        for (int j = 0; j < J; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            double ux;
            if (j == 0) ux = (v[1] - v[0]) / h;
            else if (j == J - 1) ux = (v[uj] - v[uj - 1]) / h;
            else ux = (v[uj + 1] - v[uj - 1]) / (2 * h);
            const double z = c * ux, m = x[uj] - beta_T, xx = x[uj];
            out[uj] = f(t, v[uj], &z, &m, &xx);
        }
    };

    std::vector<double> f_hi(x), f_lo(x), a(x), bb(x), cc(x), cp(x), dp(x);
    for (int n = steps; n > 0; --n) {
        const double t_hi = s + dt * n, t_lo = s + dt * (n - 1);
        const double D = 0.5 * diffusion(t_lo, t_hi);  // 1/2 k^2 averaged over the step
        const double r = 0.5 * dt * D / (h * h);
        fvec(t_hi, zcoef(t_hi, t_lo, t_hi), u, f_hi);
        for (int j = 1; j < J - 1; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            rhs[uj] = u[uj] + r * (u[uj + 1] - 2 * u[uj] + u[uj - 1]) + 0.5 * dt * f_hi[uj];
        }
        un = u;
        const double zc_lo = zcoef(t_lo, t_lo, t_hi);
        int pass = 0;
        for (; pass < opt.max_passes; ++pass) {
            prev = un;
            fvec(t_lo, zc_lo, prev, f_lo);
            // boundaries carry the driver only; the domain is wide enough that diffusion there is negligible
            un[0] = u[0] + 0.5 * dt * (f_hi[0] + f_lo[0]);
            un[static_cast<std::size_t>(J - 1)] = u[static_cast<std::size_t>(J - 1)] + 0.5 * dt * (f_hi[static_cast<std::size_t>(J - 1)] + f_lo[static_cast<std::size_t>(J - 1)]);
            // Thomas sweep on interior nodes
            for (int j = 1; j < J - 1; ++j) {
                const auto uj = static_cast<std::size_t>(j);
                a[uj] = -r;
                bb[uj] = 1 + 2 * r;
                cc[uj] = -r;
                double dj = rhs[uj] + 0.5 * dt * f_lo[uj];
                if (j == 1) dj += r * un[0];
                if (j == J - 2) dj += r * un[static_cast<std::size_t>(J - 1)];
                dp[uj] = dj;
            }
            cp[1] = cc[1] / bb[1];
            dp[1] = dp[1] / bb[1];
            for (int j = 2; j < J - 1; ++j) {
                const auto uj = static_cast<std::size_t>(j);
                const double m = bb[uj] - a[uj] * cp[uj - 1];
                cp[uj] = cc[uj] / m;
                dp[uj] = (dp[uj] - a[uj] * dp[uj - 1]) / m;
            }
            un[static_cast<std::size_t>(J - 2)] = dp[static_cast<std::size_t>(J - 2)];
            for (int j = J - 3; j >= 1; --j) un[static_cast<std::size_t>(j)] = dp[static_cast<std::size_t>(j)] - cp[static_cast<std::size_t>(j)] * un[static_cast<std::size_t>(j + 1)];
            double change = 0.0;
            for (int j = 0; j < J; ++j) change = std::max(change, std::abs(un[static_cast<std::size_t>(j)] - prev[static_cast<std::size_t>(j)]));
            if (f.is_zero() || change <= opt.tol) break;
        }
        res.max_passes_used = std::max(res.max_passes_used, static_cast<double>(pass + 1));
        u.swap(un);
    }
    res.value = u[static_cast<std::size_t>(J / 2)];
    return res;
}

/// Phi_t(w) = w(T)^2 + int_t^T k(T,r)^2 dr for d = 1 with b = 0 and a
/// brownian or exponential kernel; solves A Phi = 0.
inline FunctionalSpec second_moment_solution(const ScalarKernel& k, double horizon) {
    const std::string T = fmt_number(horizon), c2 = fmt_number(k.scale() * k.scale());
    std::string tail;
    if (k.family() == KernelFamily::brownian) {
        tail = c2 + "*(" + T + " - t)";
    } else if (k.family() == KernelFamily::exponential) {
        const std::string l = fmt_number(k.parameter());
        tail = c2 + "*(1 - exp(-2*" + l + "*(" + T + " - t)))/(2*" + l + ")";
    } else {
        throw DomainError("second_moment_solution needs a brownian or exponential kernel");
    }
    return FunctionalSpec::expression({horizon}, 1, "x^2 + " + tail, {"x"});
}

/// max |A Phi + f(., ., Phi, Gamma(m^T, Phi))| over the given (path, grid index) pairs.
inline double classical_check(const FunctionalSpec& phi, const KernelSpec& k, const DriftSpec& b, const DriverSpec& f, const PathBatch& batch,
                              const std::vector<std::pair<std::size_t, std::size_t>>& points, Derivatives mode = Derivatives::declared) {
    const int d = k.dim();
    const double T = batch.horizon();
    const ClassicalSurrogate sur(phi, k, T);
    const std::vector<double> mT = prediction_process(batch);
    const std::size_t P = batch.grid().size();
    double worst = 0.0;
    for (const auto& [n, i] : points) {
        const LiftedPath L = lift(batch, n, i);
        const auto v = sur.at(batch, mT, n, i);
        const double* m = mT.data() + (n * P + i) * static_cast<std::size_t>(d);
        const double r = apply_A(phi, k, b, L, T, mode) + f(L.t, v.y, v.z.data(), m, batch.value(n, i).data());
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

}  // namespace volterra
