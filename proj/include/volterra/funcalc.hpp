#pragma once

#include "volterra/core.hpp"
#include "volterra/expr.hpp"
#include "volterra/gauss_cond.hpp"
#include "volterra/grid.hpp"
#include "volterra/kernels.hpp"

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace volterra {

/// Smooth map phi(t, x) of the stacked anchor values x[a*d + p].
/// Derivatives that are not overridden are taken by finite differences.
class CylinderMap {
public:
    virtual ~CylinderMap() = default;
    virtual double value(double t, std::span<const double> x) const = 0;
    virtual std::optional<double> time_derivative(double, std::span<const double>) const { return std::nullopt; }
    virtual std::optional<Vector> gradient(double, std::span<const double>) const { return std::nullopt; }
    virtual std::optional<Matrix> hessian(double, std::span<const double>) const { return std::nullopt; }
    virtual std::string describe() const { return "map"; }
};

/// phi given as an Expression in (t, x_0, ..., x_{n-1}); partials are
/// symbolic.
class ExprMap final : public CylinderMap {
public:
    /// `names` lists the variable names for x in order; "t" is prepended.
    ExprMap(std::string_view text, std::vector<std::string> names) {
        std::vector<std::string> vars{"t"};
        vars.insert(vars.end(), names.begin(), names.end());
        f_ = Expression::parse(text, vars);
        const int n = static_cast<int>(names.size());
        ft_ = f_.derivative(0);
        for (int i = 0; i < n; ++i) {
            grad_.push_back(f_.derivative(i + 1));
            for (int j = 0; j <= i; ++j) hess_.push_back(grad_.back().derivative(j + 1));
        }
        n_ = n;
    }

    double value(double t, std::span<const double> x) const override { return eval(f_, t, x); }
    std::optional<double> time_derivative(double t, std::span<const double> x) const override { return eval(ft_, t, x); }
    std::optional<Vector> gradient(double t, std::span<const double> x) const override {
        Vector g(n_);
        for (int i = 0; i < n_; ++i) g(i) = eval(grad_[static_cast<std::size_t>(i)], t, x);
        return g;
    }
    std::optional<Matrix> hessian(double t, std::span<const double> x) const override {
        Matrix h(n_, n_);
        std::size_t k = 0;
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j <= i; ++j) h(i, j) = h(j, i) = eval(hess_[k++], t, x);
        return h;
    }
    std::string describe() const override { return f_.text(); }
    const Expression& expression() const noexcept { return f_; }

private:
    double eval(const Expression& e, double t, std::span<const double> x) const {
        if (x.size() < 32) {
            std::array<double, 32> v;
            v[0] = t;
            std::copy(x.begin(), x.end(), v.begin() + 1);
            return e(std::span<const double>(v.data(), x.size() + 1));
        }
        std::vector<double> v(x.size() + 1);
        v[0] = t;
        std::copy(x.begin(), x.end(), v.begin() + 1);
        return e(v);
    }

    Expression f_, ft_;
    std::vector<Expression> grad_, hess_;
    int n_ = 0;
};

/// x_i^p with closed-form partials.
class MonomialMap final : public CylinderMap {
public:
    MonomialMap(int power, int index, int arity) : p_(power), i_(index), n_(arity) {
        if (power < 0) throw ConfigError("", "monomial power must be >= 0");
    }
    double value(double, std::span<const double> x) const override { return ipow(x[static_cast<std::size_t>(i_)], p_); }
    std::optional<double> time_derivative(double, std::span<const double>) const override { return 0.0; }
    std::optional<Vector> gradient(double, std::span<const double> x) const override {
        Vector g = Vector::Zero(n_);
        if (p_ > 0) g(i_) = p_ * ipow(x[static_cast<std::size_t>(i_)], p_ - 1);
        return g;
    }
    std::optional<Matrix> hessian(double, std::span<const double> x) const override {
        Matrix h = Matrix::Zero(n_, n_);
        if (p_ > 1) h(i_, i_) = p_ * (p_ - 1) * ipow(x[static_cast<std::size_t>(i_)], p_ - 2);
        return h;
    }
    std::string describe() const override { return "x" + std::to_string(i_) + "^" + std::to_string(p_); }

private:
    static double ipow(double x, int p) {
        double r = 1.0;
        for (int k = 0; k < p; ++k) r *= x;
        return r;
    }
    int p_, i_, n_;
};

/// Plain callable without declared partials.
class LambdaMap final : public CylinderMap {
public:
    using Fn = std::function<double(double, std::span<const double>)>;
    LambdaMap(Fn f, std::string name = "lambda") : f_(std::move(f)), name_(std::move(name)) {}
    double value(double t, std::span<const double> x) const override { return f_(t, x); }
    std::string describe() const override { return name_; }

private:
    Fn f_;
    std::string name_;
};

/// Cylindrical path functional Phi~_t(w) = phi(t, w(u_1), ..., w(u_n)).
class FunctionalSpec {
public:
    enum class Kind { cylindrical, terminal_monomial, product, constant };

    FunctionalSpec() : map_(std::make_shared<ExprMap>("0", std::vector<std::string>{})) {}

    static FunctionalSpec cylindrical(std::vector<double> anchors, int dim, std::shared_ptr<const CylinderMap> map) {
        if (dim < 1) throw ConfigError("", "functional dimension must be >= 1");
        for (std::size_t i = 1; i < anchors.size(); ++i)
            if (!(anchors[i] > anchors[i - 1])) throw ConfigError("", "functional anchors must be strictly increasing");
        FunctionalSpec f;
        f.kind_ = Kind::cylindrical;
        f.anchors_ = std::move(anchors);
        f.dim_ = dim;
        f.map_ = std::move(map);
        return f;
    }

    /// phi given by an expression in t and the anchor variables `names`
    /// (anchor-major: names[a*d + p]).
    static FunctionalSpec expression(std::vector<double> anchors, int dim, std::string_view text, std::vector<std::string> names) {
        if (names.size() != anchors.size() * static_cast<std::size_t>(dim))
            throw ConfigError("", "expected one variable name per anchor coordinate");
        return cylindrical(std::move(anchors), dim, std::make_shared<ExprMap>(text, std::move(names)));
    }

    /// (X^i_T)^p, coordinate i zero-based.
    static FunctionalSpec terminal_monomial(double horizon, int power, int coord, int dim) {
        if (coord < 0 || coord >= dim) throw ConfigError("", "monomial coordinate out of range");
        auto f = cylindrical({horizon}, dim, std::make_shared<MonomialMap>(power, coord, dim));
        f.kind_ = Kind::terminal_monomial;
        f.growth_p_ = power;
        return f;
    }

    static FunctionalSpec constant(double c, int dim) {
        FunctionalSpec f;
        f.kind_ = Kind::constant;
        f.dim_ = dim;
        f.map_ = std::make_shared<ExprMap>(std::to_string(c), std::vector<std::string>{});
        f.growth_p_ = 0;
        f.growth_c_ = std::abs(c);
        return f;
    }

    static FunctionalSpec product(const FunctionalSpec& f, const FunctionalSpec& g);

    Kind kind() const noexcept { return kind_; }
    int dim() const noexcept { return dim_; }
    const std::vector<double>& anchors() const noexcept { return anchors_; }
    std::size_t arity() const noexcept { return anchors_.size() * static_cast<std::size_t>(dim_); }
    const CylinderMap& map() const { return *map_; }
    std::shared_ptr<const CylinderMap> map_ptr() const { return map_; }

    /// Declared polynomial growth |Phi~_t(w)| <= C (1 + |w|_inf^p).
    double growth_exponent() const noexcept { return growth_p_; }
    double growth_constant() const noexcept { return growth_c_; }
    FunctionalSpec& declare_growth(double p, double c) {
        growth_p_ = p;
        growth_c_ = c;
        return *this;
    }

    double operator()(double t, std::span<const double> x) const { return map_->value(t, x); }
    std::string describe() const { return map_->describe(); }

private:
    Kind kind_ = Kind::constant;
    std::vector<double> anchors_;
    int dim_ = 1;
    std::shared_ptr<const CylinderMap> map_;
    double growth_p_ = 2.0;
    double growth_c_ = 1.0;
};

/// phi(t,x) psi(t,y) over the union of the two anchor sets.
class ProductMap final : public CylinderMap {
public:
    ProductMap(FunctionalSpec f, FunctionalSpec g, std::vector<std::size_t> f_idx, std::vector<std::size_t> g_idx, std::size_t arity)
        : f_(std::move(f)), g_(std::move(g)), fi_(std::move(f_idx)), gi_(std::move(g_idx)), n_(arity) {}

    double value(double t, std::span<const double> x) const override {
        const auto a = gather(x, fi_), b = gather(x, gi_);
        return f_(t, a) * g_(t, b);
    }
    std::optional<double> time_derivative(double t, std::span<const double> x) const override {
        const auto a = gather(x, fi_), b = gather(x, gi_);
        const auto fa = f_.map().time_derivative(t, a), gb = g_.map().time_derivative(t, b);
        if (!fa || !gb) return std::nullopt;
        return *fa * g_(t, b) + f_(t, a) * *gb;
    }
    std::optional<Vector> gradient(double t, std::span<const double> x) const override {
        const auto a = gather(x, fi_), b = gather(x, gi_);
        const auto fa = f_.map().gradient(t, a), gb = g_.map().gradient(t, b);
        if (!fa || !gb) return std::nullopt;
        return scatter(*fa, fi_) * g_(t, b) + f_(t, a) * scatter(*gb, gi_);
    }
    std::optional<Matrix> hessian(double t, std::span<const double> x) const override {
        const auto a = gather(x, fi_), b = gather(x, gi_);
        const auto fa = f_.map().gradient(t, a), gb = g_.map().gradient(t, b);
        const auto Ha = f_.map().hessian(t, a), Hb = g_.map().hessian(t, b);
        if (!fa || !gb || !Ha || !Hb) return std::nullopt;
        const Vector ga = scatter(*fa, fi_), gbv = scatter(*gb, gi_);
        return scatter(*Ha, fi_) * g_(t, b) + f_(t, a) * scatter(*Hb, gi_) + ga * gbv.transpose() + gbv * ga.transpose();
    }
    std::string describe() const override { return "(" + f_.describe() + ")*(" + g_.describe() + ")"; }

private:
    static std::vector<double> gather(std::span<const double> x, const std::vector<std::size_t>& idx) {
        std::vector<double> out(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) out[i] = x[idx[i]];
        return out;
    }
    Vector scatter(const Vector& v, const std::vector<std::size_t>& idx) const {
        Vector out = Vector::Zero(static_cast<Eigen::Index>(n_));
        for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(idx[i])) += v(static_cast<Eigen::Index>(i));
        return out;
    }
    Matrix scatter(const Matrix& m, const std::vector<std::size_t>& idx) const {
        Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < idx.size(); ++j)
                out(static_cast<Eigen::Index>(idx[i]), static_cast<Eigen::Index>(idx[j])) += m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        return out;
    }

    FunctionalSpec f_, g_;
    std::vector<std::size_t> fi_, gi_;
    std::size_t n_;
};

inline FunctionalSpec FunctionalSpec::product(const FunctionalSpec& f, const FunctionalSpec& g) {
    if (f.dim() != g.dim()) throw ConfigError("", "product of functionals of different dimensions");
    const int d = f.dim();
    std::vector<double> u = f.anchors();
    for (double a : g.anchors())
        if (std::find(u.begin(), u.end(), a) == u.end()) u.push_back(a);
    std::sort(u.begin(), u.end());
    auto index_map = [&](const FunctionalSpec& h) {
        std::vector<std::size_t> idx;
        for (double a : h.anchors()) {
            const auto pos = static_cast<std::size_t>(std::find(u.begin(), u.end(), a) - u.begin());
            for (int p = 0; p < d; ++p) idx.push_back(pos * static_cast<std::size_t>(d) + static_cast<std::size_t>(p));
        }
        return idx;
    };
    const std::size_t n = u.size() * static_cast<std::size_t>(d);
    auto fi = index_map(f);
    auto gi = index_map(g);
    FunctionalSpec out = cylindrical(u, d, std::make_shared<ProductMap>(f, g, std::move(fi), std::move(gi), n));
    out.kind_ = Kind::product;
    out.growth_p_ = f.growth_p_ + g.growth_p_;
    out.growth_c_ = f.growth_c_ * g.growth_c_;
    return out;
}

/// A path on a grid, one row of values per node.
struct GridPath {
    Grid grid;
    Matrix values;  // (M+1) x d

    /// Left-constant (cadlag) evaluation off the grid.
    Vector at(double u) const { return values.row(static_cast<Eigen::Index>(grid.floor_index(u))).transpose(); }
    double sup_norm() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }
};

/// Stacked anchor values w(u_a) of a functional on a path.
inline Vector anchor_values(const FunctionalSpec& f, const GridPath& w) {
    const int d = f.dim();
    if (w.values.cols() != d) throw DomainError("path dimension differs from functional dimension");
    Vector x(static_cast<Eigen::Index>(f.arity()));
    for (std::size_t a = 0; a < f.anchors().size(); ++a) x.segment(static_cast<Eigen::Index>(a) * d, d) = w.at(f.anchors()[a]);
    return x;
}

/// Phi~_t(w).
inline double eval(const FunctionalSpec& f, double t, const GridPath& w) {
    const Vector x = anchor_values(f, w);
    return f(t, {x.data(), static_cast<std::size_t>(x.size())});
}

/// Whether derivatives come from declared partials when available or are
/// always taken by finite differences.
enum class Derivatives { declared, finite_difference };

/// Finite-difference steps relative to the path scale.
struct FdSteps {
    static double first(double scale) { return 1e-6 * (1.0 + scale); }
    static double second(double scale) { return 1e-4 * (1.0 + scale); }
    static double time(double horizon) { return 1e-6 * horizon; }
};

namespace detail {

inline double call(const FunctionalSpec& f, double t, const Vector& x) { return f(t, {x.data(), static_cast<std::size_t>(x.size())}); }

/// Directional derivative of phi at x along v, orders 1 or 2.
inline double directional(const FunctionalSpec& f, double t, const Vector& x, const Vector& v, int order, double scale, Derivatives mode) {
    if (order != 1 && order != 2) throw DomainError("Gateaux derivative order must be 1 or 2");
    if (v.size() == 0 || v.cwiseAbs().maxCoeff() == 0.0) return 0.0;
    const std::span<const double> xs{x.data(), static_cast<std::size_t>(x.size())};
    if (mode == Derivatives::declared) {
        if (order == 1) {
            if (auto g = f.map().gradient(t, xs)) return g->dot(v);
        } else {
            if (auto h = f.map().hessian(t, xs)) return v.dot(*h * v);
        }
    }
    if (order == 1) {
        const double h = FdSteps::first(scale);
        return (call(f, t, x + h * v) - call(f, t, x - h * v)) / (2.0 * h);
    }
    const double h = FdSteps::second(scale);
    return (call(f, t, x + h * v) - 2.0 * call(f, t, x) + call(f, t, x - h * v)) / (h * h);
}

inline double time_derivative(const FunctionalSpec& f, double t, const Vector& x, double horizon, Derivatives mode) {
    const std::span<const double> xs{x.data(), static_cast<std::size_t>(x.size())};
    if (mode == Derivatives::declared)
        if (auto dt = f.map().time_derivative(t, xs)) return *dt;
    const double h = FdSteps::time(horizon);
    return (call(f, t + h, x) - call(f, t, x)) / h;
}

}  // namespace detail

/// Gateaux derivative of Phi~_t at w in direction eta (a path vanishing
/// before t), order 1 or 2.
inline double gateaux(const FunctionalSpec& f, double t, const GridPath& w, const GridPath& eta, int order,
                      Derivatives mode = Derivatives::declared) {
    if (order != 1 && order != 2) throw DomainError("Gateaux derivative order must be 1 or 2");
    for (std::size_t i = 0; i < eta.grid.size(); ++i)
        if (eta.grid[i] < t - kTimeEps && eta.values.row(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff() != 0.0)
            throw DomainError("direction must vanish before t");
    return detail::directional(f, t, anchor_values(f, w), anchor_values(f, eta), order, w.sup_norm(), mode);
}

/// Values of the lifted path m_t[w] at a set of anchor times.
struct LiftedPath {
    double t = 0.0;
    std::vector<double> times;
    std::vector<Vector> values;

    Vector at(double u) const {
        for (std::size_t a = 0; a < times.size(); ++a)
            if (std::abs(times[a] - u) <= kTimeEps * std::max(1.0, std::abs(u))) return values[a];
        throw DomainError("lifted curve not available at time " + std::to_string(u));
    }
    double sup_norm() const {
        double s = 0.0;
        for (const auto& v : values) s = std::max(s, v.cwiseAbs().maxCoeff());
        return s;
    }
};

/// Lift of path n of a batch at grid index i, at all tracked anchors.
inline LiftedPath lift(const PathBatch& batch, std::size_t n, std::size_t i) {
    LiftedPath L;
    L.t = batch.grid()[i];
    for (std::size_t a = 0; a < batch.anchors().size(); ++a) {
        L.times.push_back(batch.grid()[batch.anchors()[a]]);
        L.values.push_back(batch.lifted(n, i, a));
    }
    return L;
}

/// Anchor values of f on a lifted path.
inline Vector anchor_values(const FunctionalSpec& f, const LiftedPath& L) {
    const int d = f.dim();
    Vector x(static_cast<Eigen::Index>(f.arity()));
    for (std::size_t a = 0; a < f.anchors().size(); ++a) x.segment(static_cast<Eigen::Index>(a) * d, d) = L.at(f.anchors()[a]);
    return x;
}

/// Kernel directions k_j(u_a, t) stacked over the anchors of f: column j
/// is the j-th direction.
inline Matrix kernel_directions(const FunctionalSpec& f, const KernelSpec& k, double t) {
    const int d = f.dim();
    Matrix D(static_cast<Eigen::Index>(f.arity()), d);
    for (std::size_t a = 0; a < f.anchors().size(); ++a) D.middleRows(static_cast<Eigen::Index>(a) * d, d) = k(f.anchors()[a], t);
    return D;
}

inline Vector drift_direction(const FunctionalSpec& f, const DriftSpec& b, double t) {
    const int d = f.dim();
    Vector v(static_cast<Eigen::Index>(f.arity()));
    for (std::size_t a = 0; a < f.anchors().size(); ++a) v.segment(static_cast<Eigen::Index>(a) * d, d) = b(f.anchors()[a], t);
    return v;
}

/// A Phi_t(w) = D Phi~_t + grad_{b(.,t)} Phi~_t + 1/2 sum_i grad^2_{k_i(.,t)} Phi~_t at m_t[w].
inline double apply_A(const FunctionalSpec& f, const KernelSpec& k, const DriftSpec& b, const LiftedPath& L, double horizon,
                      Derivatives mode = Derivatives::declared) {
    if (k.dim() != f.dim()) throw DomainError("kernel and functional dimensions differ");
    const double t = L.t;
    const Vector x = anchor_values(f, L);
    const double scale = L.sup_norm();
    double out = detail::time_derivative(f, t, x, horizon, mode);
    if (!b.is_zero()) out += detail::directional(f, t, x, drift_direction(f, b, t), 1, scale, mode);
    const Matrix K = kernel_directions(f, k, t);
    for (Eigen::Index j = 0; j < K.cols(); ++j) out += 0.5 * detail::directional(f, t, x, K.col(j), 2, scale, mode);
    return out;
}

/// Gamma(Phi, Psi)_t = sum_i grad_{k_i(.,t)} Phi~_t grad_{k_i(.,t)} Psi~_t at m_t[w].
inline double gamma(const FunctionalSpec& f, const FunctionalSpec& g, const KernelSpec& k, const LiftedPath& L,
                    Derivatives mode = Derivatives::declared) {
    const double t = L.t;
    const Vector xf = anchor_values(f, L), xg = anchor_values(g, L);
    const Matrix Kf = kernel_directions(f, k, t), Kg = kernel_directions(g, k, t);
    const double scale = L.sup_norm();
    double out = 0.0;
    for (Eigen::Index j = 0; j < Kf.cols(); ++j)
        out += detail::directional(f, t, xf, Kf.col(j), 1, scale, mode) * detail::directional(g, t, xg, Kg.col(j), 1, scale, mode);
    return out;
}

/// Gamma through the generator: A(Phi Psi) - Phi A Psi - Psi A Phi, all by
/// finite differences.
inline double gamma_via_product(const FunctionalSpec& f, const FunctionalSpec& g, const KernelSpec& k, const DriftSpec& b,
                                const LiftedPath& L, double horizon) {
    const auto fg = FunctionalSpec::product(f, g);
    const Vector xf = anchor_values(f, L), xg = anchor_values(g, L);
    const double F = detail::call(f, L.t, xf), G = detail::call(g, L.t, xg);
    constexpr auto fd = Derivatives::finite_difference;
    return apply_A(fg, k, b, L, horizon, fd) - F * apply_A(g, k, b, L, horizon, fd) - G * apply_A(f, k, b, L, horizon, fd);
}

/// Which quadratic-variation term the Ito residual subtracts.
///  - expected: 1/2 sum_i grad^2_{k_i} Phi~ dt, as in the generator A.
///  - realized: 1/2 (dL)^T Hess (dL) with dL the realized lift increment
///    (pathwise second-order Taylor form; drift and time terms unchanged).
enum class BracketTerm { expected, realized };

struct ItoOptions {
    BracketTerm bracket = BracketTerm::expected;
    Derivatives derivatives = Derivatives::declared;
};

/// Per-path residual of the functional Ito formula between grid times s and t:
///   Phi~_t(m_t) - Phi~_s(m_s) - sum_i A Phi~(m_{t_i}) dt_i - sum_i grad Phi~(m_{t_i}) . dJ_i,
/// where dJ_i is the realized Wiener part of the lift increment over
/// [t_i, t_{i+1}); with left-point increments this is
/// sum_j grad_{k_j(.,t_i)} Phi~ dB^j_i.
inline std::vector<double> ito_residual(const FunctionalSpec& f, const KernelSpec& k, const DriftSpec& b, const PathBatch& batch,
                                        double s, double t, ItoOptions opt = {}) {
    const Grid& grid = batch.grid();
    const std::size_t is = grid.require_index(s), it = grid.require_index(t);
    if (is > it) throw DomainError("ito_residual needs s <= t");
    if (is < batch.s_index()) throw DomainError("ito_residual must start at or after the conditioning time");
    const int d = f.dim();
    const auto A = f.anchors().size();
    std::vector<std::size_t> slot(A);
    for (std::size_t a = 0; a < A; ++a) {
        const auto gi = grid.index_of(f.anchors()[a]);
        if (!gi) throw DomainError("functional anchor " + std::to_string(f.anchors()[a]) + " is not a grid node");
        const auto sl = batch.anchor_slot(*gi);
        if (!sl) throw DomainError("functional anchor " + std::to_string(f.anchors()[a]) + " is not tracked by the batch");
        slot[a] = *sl;
    }
    const double T = grid.horizon();
    std::vector<double> out(batch.paths());
    parallel_chunks(batch.paths(), kPathChunk, [&](std::size_t n0, std::size_t n1) {
        Vector x(static_cast<Eigen::Index>(f.arity())), dx(x.size()), dj(x.size());
        for (std::size_t n = n0; n < n1; ++n) {
            for (std::size_t a = 0; a < A; ++a) x.segment(static_cast<Eigen::Index>(a) * d, d) = batch.lifted(n, is, slot[a]);
            const double start = detail::call(f, s, x);
            double acc = 0.0;
            for (std::size_t i = is; i < it; ++i) {
                const double ti = grid[i], dt = grid.width(i);
                LiftedPath L;
                L.t = ti;
                for (std::size_t a = 0; a < A; ++a) {
                    L.times.push_back(f.anchors()[a]);
                    L.values.push_back(x.segment(static_cast<Eigen::Index>(a) * d, d));
                    const std::size_t ga = batch.anchors()[slot[a]];
                    // Wiener part and full increment of the lift over [t_i, t_{i+1})
                    if (ga > i) {
                        dj.segment(static_cast<Eigen::Index>(a) * d, d) = batch.anchor_increment(slot[a], n, i);
                        if (ga == i + 1)
                            dx.segment(static_cast<Eigen::Index>(a) * d, d) = batch.value(n, ga) - x.segment(static_cast<Eigen::Index>(a) * d, d);
                        else
                            dx.segment(static_cast<Eigen::Index>(a) * d, d) =
                                batch.anchor_increment(slot[a], n, i) + batch.partial_drift(slot[a], i + 1) - batch.partial_drift(slot[a], i);
                    } else {
                        dj.segment(static_cast<Eigen::Index>(a) * d, d).setZero();
                        dx.segment(static_cast<Eigen::Index>(a) * d, d).setZero();
                    }
                }
                const double scale = L.sup_norm();
                if (opt.bracket == BracketTerm::expected) {
                    acc += apply_A(f, k, b, L, T, opt.derivatives) * dt;
                    acc += detail::directional(f, ti, x, dj, 1, scale, opt.derivatives);
                } else {
                    acc += detail::time_derivative(f, ti, x, T, opt.derivatives) * dt;
                    acc += detail::directional(f, ti, x, dx, 1, scale, opt.derivatives);
                    acc += 0.5 * detail::directional(f, ti, x, dx, 2, scale, opt.derivatives);
                }
                x += dx;
            }
            // end point from the stored values, not the running sum
            for (std::size_t a = 0; a < A; ++a) x.segment(static_cast<Eigen::Index>(a) * d, d) = batch.lifted(n, it, slot[a]);
            out[n] = detail::call(f, t, x) - start - acc;
        }
    });
    return out;
}

/// max over sampled paths of |Phi~_t(w)| / (1 + |w|_inf^p), to compare
/// with the declared growth constant.
inline double observed_growth(const FunctionalSpec& f, const PathBatch& batch, double t) {
    double worst = 0.0;
    const std::size_t P = batch.grid().size();
    for (std::size_t n = 0; n < batch.paths(); ++n) {
        GridPath w{batch.grid(), Matrix(static_cast<Eigen::Index>(P), batch.dim())};
        for (std::size_t i = 0; i < P; ++i) w.values.row(static_cast<Eigen::Index>(i)) = batch.value(n, i).transpose();
        const double v = std::abs(eval(f, t, w));
        worst = std::max(worst, v / (1.0 + std::pow(w.sup_norm(), f.growth_exponent())));
    }
    return worst;
}

}  // namespace volterra
