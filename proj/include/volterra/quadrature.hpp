#pragma once

#include "volterra/core.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <vector>

namespace volterra::quadrature {

/// Nodes and weights of a fixed rule on a concrete interval.
struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const noexcept { return nodes.size(); }

    template <class F>
    auto integrate(F&& f) const {
        auto acc = f(nodes[0]) * weights[0];
        for (std::size_t q = 1; q < nodes.size(); ++q) acc += f(nodes[q]) * weights[q];
        return acc;
    }
};

/// Points per Gauss-Legendre panel.
inline constexpr int kLegendreOrder = 8;
/// Default composite density: panels per unit length.
inline constexpr double kPanelsPerUnit = 64.0;

/// Composite Gauss-Legendre with `panels` equal panels of kLegendreOrder points.
inline Rule gauss_legendre(double a, double b, std::size_t panels) {
    using GL = boost::math::quadrature::gauss<double, kLegendreOrder>;
    const auto& x = GL::abscissa();
    const auto& w = GL::weights();
    Rule rule;
    rule.nodes.reserve(panels * kLegendreOrder);
    rule.weights.reserve(panels * kLegendreOrder);
    const double h = (b - a) / static_cast<double>(panels);
    for (std::size_t p = 0; p < panels; ++p) {
        const double lo = a + h * static_cast<double>(p);
        const double mid = lo + 0.5 * h;
        for (std::size_t k = 0; k < x.size(); ++k) {
            // boost stores the non-negative half of the symmetric rule
            rule.nodes.push_back(mid - 0.5 * h * x[k]);
            rule.weights.push_back(0.5 * h * w[k]);
            if (x[k] != 0.0) {
                rule.nodes.push_back(mid + 0.5 * h * x[k]);
                rule.weights.push_back(0.5 * h * w[k]);
            }
        }
    }
    return rule;
}

/// Composite Gauss-Legendre at the default density (at least one panel).
inline Rule gauss_legendre(double a, double b) {
    const auto panels = static_cast<std::size_t>(std::max(1.0, std::ceil(kPanelsPerUnit * (b - a) - 1e-9)));
    return gauss_legendre(a, b, panels);
}

/// Fixed tanh-sinh (double exponential) rule. Nodes never touch the
/// endpoints, and offsets from the nearer endpoint are computed directly so
/// integrable endpoint singularities are sampled accurately.
inline Rule tanh_sinh(double a, double b, double step = 1.0 / 16.0) {
    constexpr double half_pi = 0.5 * std::numbers::pi;
    const double len = b - a;
    Rule rule;
    // wide enough for r^{-0.7} endpoint behaviour; underflowing weights are dropped
    const int n = static_cast<int>(std::ceil(4.5 / step));
    for (int k = -n; k <= n; ++k) {
        const double s = step * k;
        const double u = half_pi * std::sinh(s);
        const double c = std::cosh(u);
        const double w = step * half_pi * std::cosh(s) / (c * c);
        if (w * len < 1e-300) continue;
        double node;
        if (k < 0) node = a + len / (1.0 + std::exp(-2.0 * u));
        else node = b - len / (1.0 + std::exp(2.0 * u));
        if (!(node > a && node < b)) continue;
        rule.nodes.push_back(node);
        rule.weights.push_back(0.5 * len * w);
    }
    return rule;
}

/// Adaptive Gauss-Kronrod (15 point) for smooth scalar integrands.
template <class F>
double adaptive(F&& f, double a, double b, double tol = 1e-13) {
    if (!(b > a)) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 20, tol);
}

/// Gauss-Hermite rule for the standard normal weight exp(-x^2/2)/sqrt(2 pi)
/// (probabilists' convention), from the Golub-Welsch eigenproblem.
inline Rule gauss_hermite_normal(int order) {
    if (order < 1) throw DomainError("Gauss-Hermite order must be >= 1");
    Matrix jacobi = Matrix::Zero(order, order);
    for (int i = 1; i < order; ++i) {
        const double off = std::sqrt(static_cast<double>(i));
        jacobi(i, i - 1) = off;
        jacobi(i - 1, i) = off;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi);
    Rule rule;
    for (int i = 0; i < order; ++i) {
        rule.nodes.push_back(eig.eigenvalues()(i));
        const double v = eig.eigenvectors()(0, i);
        rule.weights.push_back(v * v);
    }
    return rule;
}

}  // namespace volterra::quadrature
