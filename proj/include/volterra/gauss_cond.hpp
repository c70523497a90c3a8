#pragma once

#include "volterra/core.hpp"
#include "volterra/grid.hpp"
#include "volterra/kernels.hpp"
#include "volterra/parallel.hpp"
#include "volterra/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace volterra {

/// How the Wiener integrals int k(t,r) dB_r are discretized on each grid
/// interval I_j = [t_j, t_{j+1}).
///  - exact_block: the Gaussian vector (B(I_j), int_{I_j} k(t_l,r) dB_r for
///    every later grid time) is drawn jointly from its exact covariance,
///    computed by quadrature and factored by a rank-revealing SVD.
///  - left_point: int_{I_j} k(t,r) dB_r ~ k(t,t_j) (B_{t_{j+1}} - B_{t_j}).
enum class WienerScheme { exact_block, left_point };

inline const char* to_string(WienerScheme s) { return s == WienerScheme::exact_block ? "exact_block" : "left_point"; }

/// Information the law is conditioned on, all recorded at times <= s.
struct ConditionData {
    enum class Mode { none, increments, observed };

    double s = 0.0;
    Mode mode = Mode::none;
    /// increments: interval endpoints 0 = t_0 < ... < t_k = s.
    /// observed: observation times in (0, s] (0 is allowed and ignored).
    std::vector<double> times;
    /// increments: k x d Brownian increments. observed: one row eta(times[i]) per time.
    Matrix values;

    static ConditionData unconditioned() { return {}; }

    static ConditionData from_increments(std::vector<double> endpoints, Matrix increments) {
        if (endpoints.size() < 2 || endpoints.front() != 0.0) throw DomainError("increment record must start at 0 and span an interval");
        if (increments.rows() != static_cast<Eigen::Index>(endpoints.size() - 1))
            throw DomainError("increment record needs one row per interval");
        for (std::size_t i = 1; i < endpoints.size(); ++i)
            if (!(endpoints[i] > endpoints[i - 1])) throw DomainError("increment endpoints must increase");
        ConditionData c;
        c.s = endpoints.back();
        c.mode = Mode::increments;
        c.times = std::move(endpoints);
        c.values = std::move(increments);
        return c;
    }

    static ConditionData observed(double s, std::vector<double> obs_times, Matrix obs_values) {
        if (obs_values.rows() != static_cast<Eigen::Index>(obs_times.size())) throw DomainError("one observation row per time required");
        for (std::size_t i = 0; i < obs_times.size(); ++i) {
            if (obs_times[i] < 0.0 || obs_times[i] > s * (1.0 + kTimeEps) + kTimeEps)
                throw DomainError("observation time outside [0,s]");
            if (i > 0 && !(obs_times[i] > obs_times[i - 1])) throw DomainError("observation times must increase");
        }
        ConditionData c;
        c.s = s;
        c.mode = Mode::observed;
        c.times = std::move(obs_times);
        c.values = std::move(obs_values);
        return c;
    }

    bool trivial() const { return mode == Mode::none || s == 0.0; }
};

/// Gaussian conditioning of X on finitely many observations (kriging),
/// using the exact covariance c^0 and an eigen pseudo-inverse.
class Kriging {
public:
    /// Eigenvalues below this multiple of the trace are discarded.
    static constexpr double kCutoff = 1e-10;

    Kriging(const KernelSpec& k, const DriftSpec& b, std::vector<double> times, const Matrix& values)
        : k_(k), b_(b), times_(std::move(times)), values_(values) {
        const int d = k_.dim();
        const auto n = static_cast<Eigen::Index>(times_.size());
        Matrix C(n * d, n * d);
        Vector resid(n * d);
        for (Eigen::Index a = 0; a < n; ++a) {
            resid.segment(a * d, d) = values.row(a).transpose() - b_.integral(times_[a], 0.0, times_[a]);
            for (Eigen::Index c = a; c < n; ++c) {
                const Matrix blk = cov_cs(k_, 0.0, times_[a], times_[c]);
                C.block(a * d, c * d, d, d) = blk;
                C.block(c * d, a * d, d, d) = blk.transpose();
            }
        }
        coeffs_ = pseudo_solve(C, resid);
    }

    /// E[X_t | X_{times} = values].
    Vector mean(double t) const {
        const int d = k_.dim();
        for (std::size_t a = 0; a < times_.size(); ++a)
            if (std::abs(times_[a] - t) <= kTimeEps * std::max(1.0, t)) return values_.row(static_cast<Eigen::Index>(a)).transpose();
        Vector mu = b_.integral(t, 0.0, t);
        for (std::size_t a = 0; a < times_.size(); ++a)
            mu += cov_cs(k_, 0.0, t, times_[a]) * coeffs_.segment(static_cast<Eigen::Index>(a) * d, d);
        return mu;
    }

    static Vector pseudo_solve(const Matrix& C, const Vector& rhs) {
        if (C.rows() == 0) return Vector();
        Eigen::SelfAdjointEigenSolver<Matrix> es(C);
        const double cut = kCutoff * std::max(C.trace(), 0.0);
        const Vector& lam = es.eigenvalues();
        const Matrix& V = es.eigenvectors();
        Vector proj = V.transpose() * rhs;
        for (Eigen::Index i = 0; i < lam.size(); ++i) proj(i) = lam(i) > cut ? proj(i) / lam(i) : 0.0;
        return V * proj;
    }

private:
    KernelSpec k_;
    DriftSpec b_;
    std::vector<double> times_;
    Matrix values_;
    Vector coeffs_;
};

/// Finite-dimensional Gaussian law of (X_{t_0}, ..., X_{t_M}) under a
/// conditioned measure: mean, covariance and a square-root factor.
struct GaussianLaw {
    Grid grid;
    Vector mean;        // (M+1)d
    Matrix covariance;  // (M+1)d x (M+1)d
    Matrix factor;      // factor * factor^T = covariance

    /// ||factor factor^T - covariance||_inf / ||covariance||_inf.
    double factor_defect() const {
        const double denom = covariance.cwiseAbs().rowwise().sum().maxCoeff();
        const Matrix diff = factor * factor.transpose() - covariance;
        return denom > 0 ? diff.cwiseAbs().rowwise().sum().maxCoeff() / denom : diff.cwiseAbs().maxCoeff();
    }
};

/// N simulated paths on a grid, with the Brownian increments and the
/// per-interval Wiener contributions needed to rebuild predictions.
/// Storage is path-major: value(n, i) is contiguous in the d components.
class PathBatch {
public:
    PathBatch() = default;
    PathBatch(Grid grid, std::size_t paths, int dim, ConditionData cond, std::size_t s_index, std::vector<std::size_t> anchors)
        : grid_(std::move(grid)),
          n_(paths),
          d_(dim),
          cond_(std::move(cond)),
          s_index_(s_index),
          anchors_(std::move(anchors)),
          x_(paths * grid_.size() * static_cast<std::size_t>(dim), 0.0),
          db_(paths * grid_.intervals() * static_cast<std::size_t>(dim), 0.0),
          anchor_inc_(anchors_.size(), std::vector<double>(paths * grid_.intervals() * static_cast<std::size_t>(dim), 0.0)),
          mean_(grid_.size(), Vector::Zero(dim)),
          beta_(grid_.size(), Vector::Zero(dim)),
          partial_drift_(anchors_.size(), std::vector<Vector>(grid_.size(), Vector::Zero(dim))) {}

    const Grid& grid() const noexcept { return grid_; }
    std::size_t paths() const noexcept { return n_; }
    int dim() const noexcept { return d_; }
    double s() const noexcept { return cond_.s; }
    std::size_t s_index() const noexcept { return s_index_; }
    const ConditionData& condition() const noexcept { return cond_; }
    double horizon() const { return grid_.horizon(); }

    /// X at grid index i of path n.
    Eigen::Map<const Vector> value(std::size_t n, std::size_t i) const { return {x_.data() + xi(n, i), d_}; }
    Eigen::Map<Vector> value(std::size_t n, std::size_t i) { return {x_.data() + xi(n, i), d_}; }
    /// B_{t_{j+1}} - B_{t_j}.
    Eigen::Map<const Vector> increment(std::size_t n, std::size_t j) const { return {db_.data() + ji(n, j), d_}; }
    Eigen::Map<Vector> increment(std::size_t n, std::size_t j) { return {db_.data() + ji(n, j), d_}; }

    /// Grid indices whose Wiener contributions are tracked; the last is M.
    const std::vector<std::size_t>& anchors() const noexcept { return anchors_; }
    std::optional<std::size_t> anchor_slot(std::size_t grid_index) const {
        for (std::size_t a = 0; a < anchors_.size(); ++a)
            if (anchors_[a] == grid_index) return a;
        return std::nullopt;
    }
    /// int_{I_j} k(t_a, r) dB_r for anchor slot a.
    Eigen::Map<const Vector> anchor_increment(std::size_t a, std::size_t n, std::size_t j) const {
        return {anchor_inc_[a].data() + ji(n, j), d_};
    }
    Eigen::Map<Vector> anchor_increment(std::size_t a, std::size_t n, std::size_t j) { return {anchor_inc_[a].data() + ji(n, j), d_}; }

    /// Increment of the prediction martingale m^T over I_j.
    Eigen::Map<const Vector> prediction_increment(std::size_t n, std::size_t j) const {
        return anchor_increment(anchors_.size() - 1, n, j);
    }

    /// Conditional mean m_s[eta](t_i) + beta(t_i) of the law sampled from.
    const Vector& mean(std::size_t i) const { return mean_[i]; }
    void set_mean(std::size_t i, Vector v) { mean_[i] = std::move(v); }
    const Vector& drift_path(std::size_t i) const { return beta_[i]; }
    void set_drift_path(std::size_t i, Vector v) { beta_[i] = std::move(v); }

    /// int_0^{t_i} b(t_a, r) dr, the drift already accrued at t_i.
    const Vector& partial_drift(std::size_t a, std::size_t i) const { return partial_drift_[a][i]; }
    void set_partial_drift(std::size_t a, std::size_t i, Vector v) { partial_drift_[a][i] = std::move(v); }

    /// Lifted path at anchor slot a seen from t_i:
    /// L_{t_i}(t_a) = int_0^{t_i} b(t_a,r) dr + E[int_0^{t_a} k(t_a,r) dB_r | F_{t_i}],
    /// which equals X(t_a) once t_i >= t_a.
    Vector lifted(std::size_t n, std::size_t i, std::size_t a) const {
        const std::size_t ga = anchors_[a];
        if (ga <= i) return value(n, ga);
        Vector v = mean_[ga] - beta_[ga] + partial_drift_[a][i];
        for (std::size_t j = i; j < s_index_; ++j) v -= anchor_increment(a, n, j);
        for (std::size_t j = s_index_; j < i; ++j) v += anchor_increment(a, n, j);
        return v;
    }

    const std::vector<double>& raw_values() const noexcept { return x_; }
    const std::vector<double>& raw_increments() const noexcept { return db_; }
    std::vector<double>& raw_values() noexcept { return x_; }
    std::vector<double>& raw_increments() noexcept { return db_; }
    std::vector<double>& raw_anchor(std::size_t a) { return anchor_inc_[a]; }
    const std::vector<double>& raw_anchor(std::size_t a) const { return anchor_inc_[a]; }

private:
    std::size_t xi(std::size_t n, std::size_t i) const { return (n * grid_.size() + i) * static_cast<std::size_t>(d_); }
    std::size_t ji(std::size_t n, std::size_t j) const { return (n * grid_.intervals() + j) * static_cast<std::size_t>(d_); }

    Grid grid_;
    std::size_t n_ = 0;
    int d_ = 1;
    ConditionData cond_;
    std::size_t s_index_ = 0;
    std::vector<std::size_t> anchors_;
    std::vector<double> x_;
    std::vector<double> db_;
    std::vector<std::vector<double>> anchor_inc_;
    std::vector<Vector> mean_;
    std::vector<Vector> beta_;
    std::vector<std::vector<Vector>> partial_drift_;
};

struct SamplerOptions {
    WienerScheme scheme = WienerScheme::exact_block;
    /// Extra times whose partial predictions are tracked for path
    /// functionals; snapped to the grid by the left-constant rule. T is
    /// always tracked.
    std::vector<double> anchors;
    /// Singular values below rank_tol * sigma_max are dropped.
    double rank_tol = 1e-7;
};

/// Simulator of X under Q and Q^{s,eta} on a fixed grid. Construction
/// precomputes the per-interval covariance factors; sampling is then a
/// batched matrix product per chunk of paths.
class VolterraSampler {
public:
    VolterraSampler(KernelSpec k, DriftSpec b, Grid grid, SamplerOptions opt = {})
        : k_(std::move(k)), b_(std::move(b)), grid_(std::move(grid)), opt_(std::move(opt)) {
        if (k_.dim() != b_.dim()) throw ConfigError("drift", "drift dimension differs from kernel dimension");
        for (double u : opt_.anchors) {
            const std::size_t g = grid_.floor_index(u);
            if (g != grid_.intervals() && std::find(anchor_idx_.begin(), anchor_idx_.end(), g) == anchor_idx_.end()) anchor_idx_.push_back(g);
        }
        std::sort(anchor_idx_.begin(), anchor_idx_.end());
        anchor_idx_.push_back(grid_.intervals());
        build_blocks();
        const std::size_t m = grid_.intervals();
        beta_.resize(m + 1);
        for (std::size_t i = 0; i <= m; ++i) beta_[i] = b_.integral(grid_[i], 0.0, grid_[i]);
    }

    const KernelSpec& kernel() const noexcept { return k_; }
    const DriftSpec& drift() const noexcept { return b_; }
    const Grid& grid() const noexcept { return grid_; }
    const SamplerOptions& options() const noexcept { return opt_; }
    const std::vector<std::size_t>& anchor_indices() const noexcept { return anchor_idx_; }
    /// Number of standard normals drawn for interval j.
    Eigen::Index rank(std::size_t j) const { return blocks_[j].cols(); }

    /// Regression weight of the scheme: E[int_{I_j} k(t,r) dB_r | B(I_j)] = w_j(t) B(I_j).
    Matrix interval_weight(std::size_t j, double t) const { return scheme_weight(k_, opt_.scheme, grid_[j], grid_[j + 1], t); }

    static Matrix scheme_weight(const KernelSpec& k, WienerScheme scheme, double lo, double hi, double t) {
        if (scheme == WienerScheme::left_point) return t > lo ? k(t, lo) : Matrix::Zero(k.dim(), k.dim());
        return kernel_integral(k, t, lo, std::min(hi, t)) / (hi - lo);
    }

    /// Mean of X_t under the conditioned law (beta(t) + m_s[eta](t)).
    Vector conditional_mean(const ConditionData& cond, double t) const { return conditional_mean(k_, b_, cond, t, opt_.scheme); }

    static Vector conditional_mean(const KernelSpec& k, const DriftSpec& b, const ConditionData& cond, double t,
                                   WienerScheme scheme = WienerScheme::exact_block) {
        if (t < 0.0) throw DomainError("negative time");
        switch (cond.mode) {
            case ConditionData::Mode::none: return b.integral(t, 0.0, t);
            case ConditionData::Mode::increments: {
                Vector mu = b.integral(t, 0.0, t);
                for (std::size_t j = 0; j + 1 < cond.times.size(); ++j) {
                    if (cond.times[j] >= t) break;
                    mu += scheme_weight(k, scheme, cond.times[j], cond.times[j + 1], t) * cond.values.row(static_cast<Eigen::Index>(j)).transpose();
                }
                return mu;
            }
            case ConditionData::Mode::observed: {
                if (cond.times.empty()) return b.integral(t, 0.0, t);
                return Kriging(k, b, cond.times, cond.values).mean(t);
            }
        }
        return Vector();
    }

    /// Draw N paths from Q^{s,eta}. Path n uses normal streams keyed by
    /// (seed, n, j) for each interval j >= index(s).
    PathBatch sample(const ConditionData& cond, std::size_t N, std::uint64_t seed) const {
        if (N == 0) throw DomainError("need at least one path");
        const std::size_t si = cond.trivial() ? 0 : grid_.require_index(cond.s);
        const std::size_t m = grid_.intervals();
        const int d = k_.dim();
        if (cond.mode == ConditionData::Mode::increments) {
            if (cond.values.cols() != d) throw DomainError("increment record has wrong dimension");
            if (cond.times.size() != si + 1) throw DomainError("increment record must use the batch grid up to s");
            for (std::size_t j = 0; j <= si; ++j)
                if (std::abs(cond.times[j] - grid_[j]) > kTimeEps * std::max(1.0, grid_.horizon()))
                    throw DomainError("increment record must use the batch grid up to s");
        }
        if (cond.mode == ConditionData::Mode::observed) {
            if (cond.values.cols() != d) throw DomainError("observation record has wrong dimension");
            for (double t : cond.times) grid_.require_index(t);
        }

        PathBatch batch(grid_, N, d, cond, si, anchor_idx_);
        std::optional<Kriging> kriging;
        if (cond.mode == ConditionData::Mode::observed && !cond.times.empty()) kriging.emplace(k_, b_, cond.times, cond.values);
        auto mean_at = [&](double t) -> Vector {
            if (kriging) return kriging->mean(t);
            return conditional_mean(cond, t);
        };
        std::vector<Vector> mu(m + 1);
        for (std::size_t i = 0; i <= m; ++i) {
            mu[i] = mean_at(grid_[i]);
            batch.set_mean(i, mu[i]);
            batch.set_drift_path(i, beta_[i]);
            if (!b_.is_zero())
                for (std::size_t a = 0; a < anchor_idx_.size(); ++a)
                    batch.set_partial_drift(a, i, b_.integral(grid_[anchor_idx_[a]], 0.0, grid_[i]));
        }

        // known prefix: Brownian increments (increments mode) and anchor
        // contributions replaced by their conditional means
        std::vector<Vector> prefix_db(si), prefix_pred;
        std::vector<std::vector<Vector>> prefix_anchor(anchor_idx_.size(), std::vector<Vector>(si));
        for (std::size_t j = 0; j < si; ++j) {
            if (cond.mode == ConditionData::Mode::increments) {
                prefix_db[j] = cond.values.row(static_cast<Eigen::Index>(j)).transpose();
                for (std::size_t a = 0; a < anchor_idx_.size(); ++a)
                    prefix_anchor[a][j] = interval_weight(j, grid_[anchor_idx_[a]]) * prefix_db[j];
            } else {
                prefix_db[j] = Vector::Zero(d);
                // successive differences of the kriged predictions given data up to t_j, t_{j+1}
                for (std::size_t a = 0; a < anchor_idx_.size(); ++a) {
                    const double ta = grid_[anchor_idx_[a]];
                    prefix_anchor[a][j] = prefix_prediction(cond, j + 1, ta) - prefix_prediction(cond, j, ta);
                }
            }
        }

        // global factor matrices restricted to the fresh intervals
        std::vector<Eigen::Index> offset(m + 1, 0);
        for (std::size_t j = si; j < m; ++j) offset[j + 1] = offset[j] + blocks_[j].cols();
        for (std::size_t j = 0; j < si; ++j) offset[j + 1] = 0;
        const Eigen::Index R = offset[m];
        const Eigen::Index fresh = static_cast<Eigen::Index>(m - si);
        Matrix GX = Matrix::Zero(fresh * d, R), GB = Matrix::Zero(fresh * d, R);
        std::vector<Matrix> GA(anchor_idx_.size(), Matrix::Zero(fresh * d, R));
        for (std::size_t j = si; j < m; ++j) {
            const Matrix& F = blocks_[j];
            const Eigen::Index r = F.cols(), c0 = offset[j];
            const auto row = static_cast<Eigen::Index>(j - si) * d;
            GB.block(row, c0, d, r) = F.topRows(d);
            for (std::size_t l = j + 1; l <= m; ++l)
                GX.block(static_cast<Eigen::Index>(l - si - 1) * d, c0, d, r) = F.middleRows(static_cast<Eigen::Index>(l - j) * d, d);
            for (std::size_t a = 0; a < anchor_idx_.size(); ++a)
                if (anchor_idx_[a] > j) GA[a].block(row, c0, d, r) = F.middleRows(static_cast<Eigen::Index>(anchor_idx_[a] - j) * d, d);
        }

        parallel_chunks(N, kPathChunk, [&](std::size_t n0, std::size_t n1) {
            const auto cols = static_cast<Eigen::Index>(n1 - n0);
            Matrix Z(R, cols);
            for (std::size_t n = n0; n < n1; ++n) {
                for (std::size_t j = si; j < m; ++j) {
                    NormalStream rng(seed, n, j);
                    for (Eigen::Index q = 0; q < blocks_[j].cols(); ++q) Z(offset[j] + q, static_cast<Eigen::Index>(n - n0)) = rng();
                }
            }
            const Matrix X = GX * Z;
            const Matrix dB = GB * Z;
            std::vector<Matrix> A(anchor_idx_.size());
            for (std::size_t a = 0; a < anchor_idx_.size(); ++a) A[a] = GA[a] * Z;
            for (std::size_t n = n0; n < n1; ++n) {
                const auto c = static_cast<Eigen::Index>(n - n0);
                for (std::size_t i = 0; i <= si; ++i) batch.value(n, i) = mu[i];
                for (std::size_t i = si + 1; i <= m; ++i)
                    batch.value(n, i) = mu[i] + X.block(static_cast<Eigen::Index>(i - si - 1) * d, c, d, 1);
                for (std::size_t j = 0; j < si; ++j) {
                    batch.increment(n, j) = prefix_db[j];
                    for (std::size_t a = 0; a < anchor_idx_.size(); ++a) batch.anchor_increment(a, n, j) = prefix_anchor[a][j];
                }
                for (std::size_t j = si; j < m; ++j) {
                    const auto row = static_cast<Eigen::Index>(j - si) * d;
                    batch.increment(n, j) = dB.block(row, c, d, 1);
                    for (std::size_t a = 0; a < anchor_idx_.size(); ++a) batch.anchor_increment(a, n, j) = A[a].block(row, c, d, 1);
                }
            }
        });
        return batch;
    }

    /// Finite-dimensional law of the grid values under Q^{s,eta}.
    GaussianLaw law(const ConditionData& cond) const {
        const std::size_t m = grid_.intervals();
        const int d = k_.dim();
        const auto n = static_cast<Eigen::Index>(m + 1) * d;
        GaussianLaw L{grid_, Vector(n), Matrix::Zero(n, n), Matrix()};
        const double s = cond.trivial() ? 0.0 : cond.s;
        for (std::size_t i = 0; i <= m; ++i) {
            L.mean.segment(static_cast<Eigen::Index>(i) * d, d) = conditional_mean(cond, grid_[i]);
            for (std::size_t l = i; l <= m; ++l) {
                const Matrix c = cov_cs(k_, s, grid_[i], grid_[l]);
                L.covariance.block(static_cast<Eigen::Index>(i) * d, static_cast<Eigen::Index>(l) * d, d, d) = c;
                L.covariance.block(static_cast<Eigen::Index>(l) * d, static_cast<Eigen::Index>(i) * d, d, d) = c.transpose();
            }
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(L.covariance);
        const Vector lam = es.eigenvalues().cwiseMax(0.0);  // degenerate directions are deterministic
        L.factor = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
        return L;
    }

private:
    // kriged E[X_{ta} | observations at times <= t_i] for prefix slices
    Vector prefix_prediction(const ConditionData& cond, std::size_t i, double ta) const {
        std::vector<double> times;
        std::vector<Eigen::Index> rows;
        for (std::size_t a = 0; a < cond.times.size(); ++a)
            if (cond.times[a] <= grid_[i] + kTimeEps) {
                times.push_back(cond.times[a]);
                rows.push_back(static_cast<Eigen::Index>(a));
            }
        if (times.empty()) return b_.integral(ta, 0.0, ta);
        Matrix vals(static_cast<Eigen::Index>(rows.size()), cond.values.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) vals.row(static_cast<Eigen::Index>(r)) = cond.values.row(rows[r]);
        return Kriging(k_, b_, std::move(times), vals).mean(ta);
    }

    void build_blocks() {
        const std::size_t m = grid_.intervals();
        const int d = k_.dim();
        blocks_.resize(m);
        Matrix kq(d, d);
        for (std::size_t j = 0; j < m; ++j) {
            const double lo = grid_[j], hi = grid_[j + 1];
            const auto rows = static_cast<Eigen::Index>(m - j + 1) * d;
            if (opt_.scheme == WienerScheme::left_point) {
                Matrix F(rows, d);
                F.topRows(d).setIdentity();
                for (std::size_t l = j + 1; l <= m; ++l) {
                    k_.eval_into(grid_[l], lo, kq);
                    if (!kq.allFinite()) throw DomainError("left_point scheme needs a finite kernel at grid nodes");
                    F.middleRows(static_cast<Eigen::Index>(l - j) * d, d) = kq;
                }
                blocks_[j] = std::sqrt(hi - lo) * F;
                continue;
            }
            const auto rule = kernel_rule(k_, lo, hi);
            const auto Q = static_cast<Eigen::Index>(rule.size());
            Matrix B(rows, Q * d);
            for (Eigen::Index q = 0; q < Q; ++q) {
                const double r = rule.nodes[static_cast<std::size_t>(q)];
                const double sw = std::sqrt(rule.weights[static_cast<std::size_t>(q)]);
                B.block(0, q * d, d, d) = sw * Matrix::Identity(d, d);
                for (std::size_t l = j + 1; l <= m; ++l) {
                    k_.eval_into(grid_[l], r, kq);
                    B.block(static_cast<Eigen::Index>(l - j) * d, q * d, d, d) = sw * kq;
                }
            }
            Eigen::BDCSVD<Matrix> svd(B, Eigen::ComputeThinU);
            const Vector& sv = svd.singularValues();
            Eigen::Index r = 0;
            while (r < sv.size() && sv(r) > opt_.rank_tol * sv(0)) ++r;
            r = std::max<Eigen::Index>(r, 1);
            blocks_[j] = svd.matrixU().leftCols(r) * sv.head(r).asDiagonal();
        }
    }

    KernelSpec k_;
    DriftSpec b_;
    Grid grid_;
    SamplerOptions opt_;
    std::vector<std::size_t> anchor_idx_;
    std::vector<Matrix> blocks_;  // rows: [dB; J(t_{j+1}); ...; J(t_M)], d each
    std::vector<Vector> beta_;
};

/// Unconditioned sample under Q.
inline PathBatch sample_unconditioned(const KernelSpec& k, const DriftSpec& b, const Grid& grid, std::size_t N, std::uint64_t seed,
                                      SamplerOptions opt = {}) {
    return VolterraSampler(k, b, grid, std::move(opt)).sample(ConditionData::unconditioned(), N, seed);
}

inline PathBatch sample_conditional(const KernelSpec& k, const DriftSpec& b, const ConditionData& cond, const Grid& grid,
                                    std::size_t N, std::uint64_t seed, SamplerOptions opt = {}) {
    return VolterraSampler(k, b, grid, std::move(opt)).sample(cond, N, seed);
}

inline Vector conditional_mean(const KernelSpec& k, const DriftSpec& b, const ConditionData& cond, double t,
                               WienerScheme scheme = WienerScheme::exact_block) {
    return VolterraSampler::conditional_mean(k, b, cond, t, scheme);
}

/// Prediction martingale m^T_{t_i} = E[X_T | F_{t_i}] - beta(T) for every
/// path and grid index, laid out like PathBatch values.
inline std::vector<double> prediction_process(const PathBatch& batch) {
    const std::size_t N = batch.paths(), P = batch.grid().size(), m = batch.grid().intervals();
    const auto d = static_cast<std::size_t>(batch.dim());
    std::vector<double> out(N * P * d);
    const std::size_t a = batch.anchors().size() - 1;
    const Vector base0 = batch.mean(m) - batch.drift_path(m);
    for (std::size_t n = 0; n < N; ++n) {
        // start from the conditional mean at T and back out the prefix contributions
        Vector acc = base0;
        for (std::size_t j = 0; j < batch.s_index(); ++j) acc -= batch.anchor_increment(a, n, j);
        for (std::size_t i = 0; i < P; ++i) {
            std::copy(acc.data(), acc.data() + d, out.begin() + static_cast<std::ptrdiff_t>((n * P + i) * d));
            if (i < m) acc += batch.anchor_increment(a, n, i);
        }
    }
    return out;
}

}  // namespace volterra
