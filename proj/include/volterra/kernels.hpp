#pragma once

#include "volterra/core.hpp"
#include "volterra/grid.hpp"
#include "volterra/quadrature.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace volterra {

/// Samples of a two-parameter function on a rectangular (t, r) lattice,
/// bilinearly interpolated and extended by zero above the diagonal.
class TableSamples {
public:
    TableSamples(std::vector<double> t, std::vector<double> r, Matrix values)
        : t_(std::move(t)), r_(std::move(r)), values_(std::move(values)) {
        if (t_.size() < 2 || r_.size() < 2) throw ConfigError("", "table needs at least two t and two r samples");
        if (values_.rows() != static_cast<Eigen::Index>(t_.size()) || values_.cols() != static_cast<Eigen::Index>(r_.size()))
            throw ConfigError("", "table value matrix does not match its axes");
        for (std::size_t i = 1; i < t_.size(); ++i)
            if (!(t_[i] > t_[i - 1])) throw ConfigError("", "table t values must be strictly increasing");
        for (std::size_t i = 1; i < r_.size(); ++i)
            if (!(r_[i] > r_[i - 1])) throw ConfigError("", "table r values must be strictly increasing");
    }

    /// CSV with header "t,r,value", rows ordered by t then r.
    static std::shared_ptr<const TableSamples> load_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError(path, "cannot open table file");
        std::string line;
        std::getline(in, line);
        line.erase(std::remove_if(line.begin(), line.end(), ::isspace), line.end());
        if (line != "t,r,value") throw ConfigError(path, "table header must be 't,r,value'");
        std::vector<double> ts, rs, vs;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            std::stringstream ss(line);
            std::string a, b, c;
            if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
                throw ConfigError(path, "malformed table row '" + line + "'");
            try {
                ts.push_back(std::stod(a));
                rs.push_back(std::stod(b));
                vs.push_back(std::stod(c));
            } catch (...) {
                throw ConfigError(path, "non-numeric table row '" + line + "'");
            }
        }
        return from_rows(ts, rs, vs, path);
    }

    static std::shared_ptr<const TableSamples> from_rows(const std::vector<double>& ts, const std::vector<double>& rs,
                                                         const std::vector<double>& vs, const std::string& origin = "table") {
        std::vector<double> t_axis, r_axis;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            if (t_axis.empty() || ts[i] != t_axis.back()) {
                if (!t_axis.empty() && ts[i] < t_axis.back()) throw ConfigError(origin, "t must be increasing");
                t_axis.push_back(ts[i]);
            }
        }
        const std::size_t nt = t_axis.size();
        if (nt == 0 || ts.size() % nt != 0) throw ConfigError(origin, "table is not a full lattice");
        const std::size_t nr = ts.size() / nt;
        r_axis.assign(rs.begin(), rs.begin() + static_cast<std::ptrdiff_t>(nr));
        Matrix values(static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(nr));
        for (std::size_t i = 0; i < nt; ++i) {
            for (std::size_t j = 0; j < nr; ++j) {
                const std::size_t k = i * nr + j;
                if (ts[k] != t_axis[i] || rs[k] != r_axis[j]) throw ConfigError(origin, "table is not a full lattice ordered by t then r");
                values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vs[k];
            }
        }
        return std::make_shared<const TableSamples>(std::move(t_axis), std::move(r_axis), std::move(values));
    }

    double operator()(double t, double r) const {
        if (r > t) return 0.0;
        const auto [i, wt] = locate(t_, t);
        const auto [j, wr] = locate(r_, r);
        const auto I = static_cast<Eigen::Index>(i), J = static_cast<Eigen::Index>(j);
        return (1 - wt) * (1 - wr) * values_(I, J) + wt * (1 - wr) * values_(I + 1, J) + (1 - wt) * wr * values_(I, J + 1) +
               wt * wr * values_(I + 1, J + 1);
    }

private:
    // clamped cell lookup
    static std::pair<std::size_t, double> locate(const std::vector<double>& axis, double x) {
        if (x <= axis.front()) return {0, 0.0};
        if (x >= axis.back()) return {axis.size() - 2, 1.0};
        const auto it = std::upper_bound(axis.begin(), axis.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - axis.begin()) - 1;
        return {i, (x - axis[i]) / (axis[i + 1] - axis[i])};
    }

    std::vector<double> t_, r_;
    Matrix values_;
};

enum class KernelFamily { zero, brownian, exponential, fbm_mg, table };

/// One scalar entry k_ij of a Volterra kernel, times a constant scale.
class ScalarKernel {
public:
    static ScalarKernel zero() { return ScalarKernel(KernelFamily::zero, 0.0); }
    static ScalarKernel brownian(double scale = 1.0) { return ScalarKernel(KernelFamily::brownian, 0.0, scale); }
    static ScalarKernel exponential(double rate, double scale = 1.0) {
        if (!(rate >= 0.0)) throw ConfigError("", "exponential rate must be >= 0");
        return ScalarKernel(KernelFamily::exponential, rate, scale);
    }
    /// Molchan-Golosov kernel of fractional Brownian motion.
    static ScalarKernel fbm(double hurst, double scale = 1.0) {
        if (!(hurst > 0.0 && hurst < 1.0)) throw ConfigError("", "Hurst index must lie in (0,1)");
        ScalarKernel k(KernelFamily::fbm_mg, hurst, scale);
        k.fbm_const_ = std::sqrt(2.0 * hurst * std::tgamma(1.5 - hurst) / (std::tgamma(hurst + 0.5) * std::tgamma(2.0 - 2.0 * hurst)));
        return k;
    }
    static ScalarKernel table(std::shared_ptr<const TableSamples> samples, double scale = 1.0) {
        ScalarKernel k(KernelFamily::table, 0.0, scale);
        k.table_ = std::move(samples);
        return k;
    }

    KernelFamily family() const noexcept { return family_; }
    double parameter() const noexcept { return param_; }
    double scale() const noexcept { return scale_; }
    bool singular() const noexcept { return family_ == KernelFamily::fbm_mg && param_ != 0.5; }
    ScalarKernel scaled(double factor) const {
        ScalarKernel k = *this;
        k.scale_ *= factor;
        return k;
    }

    double operator()(double t, double r) const {
        if (r > t) return 0.0;
        switch (family_) {
            case KernelFamily::zero: return 0.0;
            case KernelFamily::brownian: return scale_;
            case KernelFamily::exponential: return scale_ * std::exp(-param_ * (t - r));
            case KernelFamily::fbm_mg: return scale_ * molchan_golosov(t, r);
            case KernelFamily::table: return scale_ * (*table_)(t, r);
        }
        return 0.0;
    }

    std::string describe() const {
        std::ostringstream os;
        if (scale_ != 1.0) os << scale_ << "*";
        switch (family_) {
            case KernelFamily::zero: return "zero";
            case KernelFamily::brownian: os << "brownian"; break;
            case KernelFamily::exponential: os << "exponential(" << param_ << ")"; break;
            case KernelFamily::fbm_mg: os << "fbm(" << param_ << ")"; break;
            case KernelFamily::table: os << "table"; break;
        }
        return os.str();
    }

private:
    ScalarKernel(KernelFamily f, double p, double scale = 1.0) : family_(f), param_(p), scale_(scale) {}

    // K_H(t,s) = c_H [ (t/s)^{H-1/2} (t-s)^{H-1/2} - (H-1/2) s^{1/2-H} int_s^t u^{H-3/2} (u-s)^{H-1/2} du ].
    // With u = s/x the integral is s^{2H-1} int_{s/t}^1 x^{-2H} (1-x)^{H-1/2} dx,
    // an incomplete beta function; for H > 1/2 one integration by parts
    // makes both beta parameters positive.
    double molchan_golosov(double t, double s) const {
        namespace bm = boost::math;
        const double H = param_;
        const double a = H - 0.5;
        if (a == 0.0) return 1.0;
        if (s <= 0.0) return a > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        if (s >= t) return a > 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        const double z = s / t;
        double tail;
        if (a < 0.0) {
            tail = bm::beta(1.0 - 2.0 * H, H + 0.5) * bm::ibetac(1.0 - 2.0 * H, H + 0.5, z);
        } else {
            tail = -std::pow(z, 1.0 - 2.0 * H) * std::pow(1.0 - z, a) / (1.0 - 2.0 * H) +
                   a / (1.0 - 2.0 * H) * bm::beta(2.0 - 2.0 * H, a) * bm::ibetac(2.0 - 2.0 * H, a, z);
        }
        return fbm_const_ * (std::pow(t / s, a) * std::pow(t - s, a) - a * std::pow(s, a) * tail);
    }

    KernelFamily family_;
    double param_;
    double scale_ = 1.0;
    double fbm_const_ = 1.0;
    std::shared_ptr<const TableSamples> table_;
};

/// Matrix-valued Volterra kernel k : [0,T]^2 -> M_d(R), given entrywise.
class KernelSpec {
public:
    KernelSpec() : KernelSpec(diagonal(1, ScalarKernel::brownian())) {}

    static KernelSpec diagonal(int dim, const ScalarKernel& k) {
        if (dim < 1) throw ConfigError("", "kernel dimension must be >= 1");
        KernelSpec spec(dim);
        for (int i = 0; i < dim; ++i) spec.set(i, i, k);
        return spec;
    }
    static KernelSpec brownian(int dim = 1) { return diagonal(dim, ScalarKernel::brownian()); }
    static KernelSpec exponential(double rate, int dim = 1) { return diagonal(dim, ScalarKernel::exponential(rate)); }
    static KernelSpec fbm(double hurst, int dim = 1) { return diagonal(dim, ScalarKernel::fbm(hurst)); }

    int dim() const noexcept { return dim_; }
    const ScalarKernel& entry(int i, int j) const { return entries_[static_cast<std::size_t>(i * dim_ + j)]; }
    void set(int i, int j, ScalarKernel k) {
        if (i < 0 || j < 0 || i >= dim_ || j >= dim_) throw ConfigError("", "kernel entry index out of range");
        entries_[static_cast<std::size_t>(i * dim_ + j)] = std::move(k);
    }

    bool singular() const {
        return std::any_of(entries_.begin(), entries_.end(), [](const ScalarKernel& k) { return k.singular(); });
    }
    bool has_family(KernelFamily f) const {
        return std::any_of(entries_.begin(), entries_.end(), [f](const ScalarKernel& k) { return k.family() == f; });
    }

    /// k(t,r), unchecked; exact zero block for r > t.
    Matrix operator()(double t, double r) const {
        Matrix out(dim_, dim_);
        eval_into(t, r, out);
        return out;
    }

    void eval_into(double t, double r, Matrix& out) const {
        out.resize(dim_, dim_);
        if (r > t) {
            out.setZero();
            return;
        }
        for (int i = 0; i < dim_; ++i)
            for (int j = 0; j < dim_; ++j) out(i, j) = entries_[static_cast<std::size_t>(i * dim_ + j)](t, r);
    }

    std::string describe() const {
        std::ostringstream os;
        os << "dim=" << dim_;
        for (int i = 0; i < dim_; ++i)
            for (int j = 0; j < dim_; ++j)
                if (entry(i, j).family() != KernelFamily::zero) os << " k" << i + 1 << j + 1 << "=" << entry(i, j).describe();
        return os.str();
    }

private:
    explicit KernelSpec(int dim) : dim_(dim), entries_(static_cast<std::size_t>(dim * dim), ScalarKernel::zero()) {}

    int dim_;
    std::vector<ScalarKernel> entries_;
};

enum class DriftFamily { zero, constant, table };

/// Drift density b : [0,T]^2 -> R^d, zero for r > t.
class DriftSpec {
public:
    DriftSpec() : DriftSpec(zero(1)) {}

    static DriftSpec zero(int dim) { return DriftSpec(DriftFamily::zero, Vector::Zero(dim)); }
    static DriftSpec constant(Vector value) { return DriftSpec(DriftFamily::constant, std::move(value)); }
    /// One table per component.
    static DriftSpec table(std::vector<std::shared_ptr<const TableSamples>> components) {
        DriftSpec d(DriftFamily::table, Vector::Zero(static_cast<Eigen::Index>(components.size())));
        d.tables_ = std::move(components);
        return d;
    }

    int dim() const noexcept { return static_cast<int>(value_.size()); }
    DriftFamily family() const noexcept { return family_; }
    bool is_zero() const noexcept { return family_ == DriftFamily::zero; }

    Vector operator()(double t, double r) const {
        Vector out = Vector::Zero(dim());
        if (r > t) return out;
        switch (family_) {
            case DriftFamily::zero: break;
            case DriftFamily::constant: out = value_; break;
            case DriftFamily::table:
                for (int i = 0; i < dim(); ++i) out(i) = (*tables_[static_cast<std::size_t>(i)])(t, r);
                break;
        }
        return out;
    }

    /// int_lo^hi b(t,r) dr (the part of [lo,hi] above t contributes zero).
    /// Tables use composite Gauss-Legendre at 64 panels per unit length,
    /// 8 points per panel.
    Vector integral(double t, double lo, double hi) const {
        hi = std::min(hi, t);
        if (!(hi > lo) || family_ == DriftFamily::zero) return Vector::Zero(dim());
        if (family_ == DriftFamily::constant) return value_ * (hi - lo);
        const auto rule = quadrature::gauss_legendre(lo, hi);
        Vector acc = Vector::Zero(dim());
        for (std::size_t q = 0; q < rule.size(); ++q) acc += rule.weights[q] * (*this)(t, rule.nodes[q]);
        return acc;
    }

    std::string describe() const {
        std::ostringstream os;
        switch (family_) {
            case DriftFamily::zero: return "zero";
            case DriftFamily::constant: os << "constant(" << value_.transpose() << ")"; return os.str();
            case DriftFamily::table: return "table";
        }
        return "";
    }

private:
    DriftSpec(DriftFamily f, Vector v) : family_(f), value_(std::move(v)) {
        if (value_.size() < 1) throw ConfigError("", "drift dimension must be >= 1");
    }

    DriftFamily family_;
    Vector value_;
    std::vector<std::shared_ptr<const TableSamples>> tables_;
};

inline void require_time(double t, double horizon) {
    if (!std::isfinite(t) || t < 0.0 || t > horizon * (1.0 + kTimeEps) + kTimeEps)
        throw DomainError("time " + std::to_string(t) + " outside [0," + std::to_string(horizon) + "]");
}

/// k(t,r) with domain checking against [0, horizon].
inline Matrix eval_k(const KernelSpec& spec, double t, double r, double horizon) {
    require_time(t, horizon);
    require_time(r, horizon);
    return spec(t, r);
}

/// beta(t) = int_0^t b(t,r) dr.
inline Vector beta(const DriftSpec& spec, double t, double horizon = std::numeric_limits<double>::infinity()) {
    require_time(t, horizon);
    return spec.integral(t, 0.0, t);
}

/// Quadrature rule used for integrals of k(t,.) over [lo,hi]: tanh-sinh for
/// kernels with endpoint singularities, composite Gauss-Legendre otherwise.
inline quadrature::Rule kernel_rule(const KernelSpec& spec, double lo, double hi) {
    if (spec.singular()) return quadrature::tanh_sinh(lo, hi, 1.0 / 16.0);
    return quadrature::gauss_legendre(lo, hi);
}

/// int_lo^hi k(t,r) k(u,r)^T dr for lo <= hi.
inline Matrix kernel_product_integral(const KernelSpec& spec, double t, double u, double lo, double hi) {
    const int d = spec.dim();
    Matrix acc = Matrix::Zero(d, d);
    hi = std::min({hi, t, u});
    if (!(hi > lo)) return acc;
    const auto rule = kernel_rule(spec, lo, hi);
    Matrix kt(d, d), ku(d, d);
    for (std::size_t q = 0; q < rule.size(); ++q) {
        spec.eval_into(t, rule.nodes[q], kt);
        spec.eval_into(u, rule.nodes[q], ku);
        acc.noalias() += rule.weights[q] * kt * ku.transpose();
    }
    return acc;
}

/// int_lo^hi k(t,r) dr.
inline Matrix kernel_integral(const KernelSpec& spec, double t, double lo, double hi) {
    const int d = spec.dim();
    Matrix acc = Matrix::Zero(d, d);
    hi = std::min(hi, t);
    if (!(hi > lo)) return acc;
    const auto rule = kernel_rule(spec, lo, hi);
    Matrix kt(d, d);
    for (std::size_t q = 0; q < rule.size(); ++q) {
        spec.eval_into(t, rule.nodes[q], kt);
        acc.noalias() += rule.weights[q] * kt;
    }
    return acc;
}

/// Conditional covariance c^s(t,u) = int_s^{t∧u} k(t,r) k(u,r)^T dr, zero if
/// t < s or u < s.
inline Matrix cov_cs(const KernelSpec& spec, double s, double t, double u) {
    if (t < s || u < s) return Matrix::Zero(spec.dim(), spec.dim());
    return kernel_product_integral(spec, t, u, s, std::min(t, u));
}

/// Numerical audit of the boundedness and regularity requirements on (b,k).
struct HypothesisReport {
    double k_bound = 0.0;
    double b_bound = 0.0;
    double max_right_derivative_k = 0.0;
    double max_right_derivative_b = 0.0;
    /// |d+/dt k| at t - r = delta * T for delta in diagonal_probes
    std::vector<double> diagonal_probes;
    std::vector<double> diagonal_derivative_k;
    std::vector<double> origin_values_k;  // sup |k(t, delta*T)| approaching r = 0
    double beta_continuity_defect = 0.0;
    double beta_continuity_defect_fine = 0.0;
    double m_op = 0.0;

    bool k_bounded = true;
    bool b_bounded = true;
    bool right_derivative_bounded = true;
    bool beta_continuous = true;
    bool experimental = false;
    std::vector<std::string> notes;

    bool all_pass() const { return k_bounded && b_bounded && right_derivative_bounded && beta_continuous; }
};

namespace detail {

inline double max_abs(const Matrix& m) {
    double v = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) v = std::max(v, std::abs(m.data()[i]));
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
}

// true when a sequence sampled on successive decades grows by more than
// (1+tol) per step, or is not finite
inline bool grows(const std::vector<double>& seq, double tol) {
    for (double v : seq)
        if (!std::isfinite(v)) return true;
    for (std::size_t i = 1; i < seq.size(); ++i) {
        if (seq[i] > (1.0 + tol) * seq[i - 1] + 1e-12) return true;
    }
    return false;
}

}  // namespace detail

/// Right-derivative step used by check_hypotheses.
inline constexpr double kRightDerivativeStep = 1e-5;

/// Evaluate the kernel/drift hypotheses on `grid`. Report-only: a failed
/// clause sets its flag and never throws.
inline HypothesisReport check_hypotheses(const KernelSpec& k, const DriftSpec& b, const Grid& grid, double tol = 0.1) {
    if (grid.size() < 2) throw DomainError("hypothesis check needs at least two grid points");
    HypothesisReport rep;
    const double T = grid.horizon();
    const double h = kRightDerivativeStep * T;
    const std::size_t n = grid.size();
    auto dk = [&](double t, double r) { return detail::max_abs((k(t + h, r) - k(t, r)) / h); };
    auto db = [&](double t, double r) { return (b(t + h, r) - b(t, r)).cwiseAbs().maxCoeff() / h; };

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double t = grid[i], r = grid[j];
            if (r == 0.0 && k.singular()) continue;  // probed separately below
            rep.k_bound = std::max(rep.k_bound, detail::max_abs(k(t, r)));
            rep.b_bound = std::max(rep.b_bound, b(t, r).cwiseAbs().maxCoeff());
            if (j < i) {
                rep.max_right_derivative_k = std::max(rep.max_right_derivative_k, dk(t, r));
                rep.max_right_derivative_b = std::max(rep.max_right_derivative_b, db(t, r));
            }
        }
    }

    rep.diagonal_probes = {1e-2, 1e-3, 1e-4};
    std::vector<double> b_diag, b_origin;
    for (double delta : rep.diagonal_probes) {
        double dmax = 0.0, omax = 0.0, bd = 0.0, bo = 0.0;
        for (std::size_t i = 1; i < n; ++i) {
            const double t = grid[i];
            if (t - delta * T >= 0.0) {
                dmax = std::max(dmax, dk(t, t - delta * T));
                bd = std::max(bd, b(t, t - delta * T).cwiseAbs().maxCoeff());
            }
            if (delta * T < t) {
                omax = std::max(omax, detail::max_abs(k(t, delta * T)));
                bo = std::max(bo, b(t, delta * T).cwiseAbs().maxCoeff());
            }
        }
        rep.diagonal_derivative_k.push_back(dmax);
        rep.origin_values_k.push_back(omax);
        b_diag.push_back(bd);
        b_origin.push_back(bo);
        rep.max_right_derivative_k = std::max(rep.max_right_derivative_k, dmax);
        rep.k_bound = std::max(rep.k_bound, omax);
        rep.b_bound = std::max({rep.b_bound, bd, bo});
    }
    rep.k_bounded = std::isfinite(rep.k_bound) && !detail::grows(rep.origin_values_k, tol);
    rep.b_bounded = std::isfinite(rep.b_bound) && !detail::grows(b_origin, tol) && !detail::grows(b_diag, tol);
    rep.right_derivative_bounded = std::isfinite(rep.max_right_derivative_k) && !detail::grows(rep.diagonal_derivative_k, tol) &&
                                   std::isfinite(rep.max_right_derivative_b);

    // beta continuity: defect at step h and h/10 must shrink
    double beta_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = grid[i];
        const Vector bt = b.integral(t, 0.0, t);
        beta_max = std::max(beta_max, bt.cwiseAbs().maxCoeff());
        const double tp = std::min(t + h, T), tq = std::min(t + 0.1 * h, T);
        if (tp > t) rep.beta_continuity_defect = std::max(rep.beta_continuity_defect, (b.integral(tp, 0.0, tp) - bt).cwiseAbs().maxCoeff());
        if (tq > t) rep.beta_continuity_defect_fine = std::max(rep.beta_continuity_defect_fine, (b.integral(tq, 0.0, tq) - bt).cwiseAbs().maxCoeff());
    }
    rep.beta_continuous = rep.beta_continuity_defect <= 1e-14 * (1.0 + beta_max) ||
                          rep.beta_continuity_defect_fine <= rep.beta_continuity_defect / (1.0 + tol);

    // M_op = max_i sup_s sup_{r<=s} max_j sup_t |c_ij(r,t)| / max_j' sup_{r'<=s} |c_ij'(r,r')|
    const int d = k.dim();
    std::vector<Matrix> cov(n * n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t c = a; c < n; ++c) {
            cov[a * n + c] = cov_cs(k, 0.0, grid[a], grid[c]);
            cov[c * n + a] = cov[a * n + c].transpose();
        }
    for (int i = 0; i < d; ++i) {
        for (std::size_t r = 0; r < n; ++r) {
            double num = 0.0;
            for (std::size_t t = 0; t < n; ++t) num = std::max(num, cov[r * n + t].row(i).cwiseAbs().maxCoeff());
            double den = 0.0;
            for (std::size_t s = r; s < n; ++s) {
                den = std::max(den, cov[r * n + s].row(i).cwiseAbs().maxCoeff());  // r' = s extends the sup
                if (den > 1e-300) rep.m_op = std::max(rep.m_op, num / den);
            }
        }
    }

    if (k.has_family(KernelFamily::fbm_mg)) {
        rep.experimental = true;
        rep.notes.push_back("fbm kernel: right-derivative unbounded near the diagonal; shipped as experimental");
    }
    if (!rep.k_bounded) rep.notes.push_back("kernel magnitude grows when approaching r = 0");
    if (!rep.right_derivative_bounded) rep.notes.push_back("right-derivative of k grows when approaching the diagonal");
    if (!rep.beta_continuous) rep.notes.push_back("beta appears discontinuous");
    return rep;
}

}  // namespace volterra
