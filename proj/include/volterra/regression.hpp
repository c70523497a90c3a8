#pragma once

#include "volterra/core.hpp"
#include "volterra/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <string>
#include <vector>

namespace volterra {

/// Regression features, one row per path.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Total-degree polynomial basis on standardized features.
class PolynomialBasis {
public:
    PolynomialBasis() = default;
    PolynomialBasis(int features, int degree) : n_(features), degree_(degree) {
        if (features < 0 || degree < 0 || degree > 8) throw ConfigError("solver.degree", "basis degree must lie in [0, 8]");
        std::vector<int> cur(static_cast<std::size_t>(features), 0);
        for (int total = 0; total <= degree; ++total) enumerate(cur, 0, total);
    }

    int features() const noexcept { return n_; }
    int degree() const noexcept { return degree_; }
    Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(terms_.size()); }

    /// Basis values at standardized feature vector z (first entry is 1).
    void evaluate(const double* z, double* out) const {
        double pw[16][9];
        for (int f = 0; f < n_; ++f) {
            pw[f][0] = 1.0;
            for (int p = 1; p <= degree_; ++p) pw[f][p] = pw[f][p - 1] * z[f];
        }
        for (std::size_t k = 0; k < terms_.size(); ++k) {
            double v = 1.0;
            for (int f = 0; f < n_; ++f) v *= pw[f][terms_[k][static_cast<std::size_t>(f)]];
            out[k] = v;
        }
    }

private:
    void enumerate(std::vector<int>& cur, int pos, int remaining) {
        if (pos == n_) {
            if (remaining == 0) terms_.push_back(cur);
            return;
        }
        for (int p = remaining; p >= 0; --p) {
            cur[static_cast<std::size_t>(pos)] = p;
            enumerate(cur, pos + 1, remaining - p);
        }
        cur[static_cast<std::size_t>(pos)] = 0;
    }

    int n_ = 0;
    int degree_ = 0;
    std::vector<std::vector<int>> terms_;
};

/// Affine standardization of features; constant features are dropped.
struct Standardizer {
    Vector mean, scale;
    std::vector<int> active;

    static Standardizer fit(const FeatureMatrix& F) {  // paths x features
        Standardizer s;
        const auto N = static_cast<double>(F.rows());
        s.mean = F.colwise().sum().transpose() / N;
        s.scale = Vector::Ones(F.cols());
        for (Eigen::Index j = 0; j < F.cols(); ++j) {
            const double var = (F.col(j).array() - s.mean(j)).square().sum() / N;
            const double sd = std::sqrt(var);
            if (sd > 1e-12 * (1.0 + std::abs(s.mean(j)))) {
                s.scale(j) = sd;
                s.active.push_back(static_cast<int>(j));
            }
        }
        return s;
    }

    void apply(const double* raw, double* z) const {
        for (std::size_t k = 0; k < active.size(); ++k) {
            const int j = active[k];
            z[k] = (raw[j] - mean(j)) / scale(j);
        }
    }
};

/// Linear fit of several targets on a shared basis.
struct RegressionFit {
    Standardizer standardizer;
    PolynomialBasis basis;
    Matrix coeffs;  // basis size x targets
    double condition = 1.0;

    /// Fitted values for one raw feature vector.
    Vector predict(const double* raw) const {
        double z[16], phi[1024];
        standardizer.apply(raw, z);
        basis.evaluate(z, phi);
        return coeffs.transpose() * Eigen::Map<const Vector>(phi, basis.size());
    }
};

/// Ridge parameter relative to the sample size, and the condition number
/// beyond which a slice is declared singular.
inline constexpr double kDefaultRidge = 1e-8;
inline constexpr double kMaxCondition = 1e14;

/// Least squares of `targets` (paths x m) on a polynomial basis of
/// `features` (paths x f). The intercept is not penalized.
inline RegressionFit fit_regression(const FeatureMatrix& features, const Matrix& targets, int degree, double ridge_factor, std::size_t slice) {
    RegressionFit fit;
    fit.standardizer = Standardizer::fit(features);
    const int nf = static_cast<int>(fit.standardizer.active.size());
    if (nf > 16) throw ConfigError("solver.features", "at most 16 regression features are supported");
    fit.basis = PolynomialBasis(nf, nf == 0 ? 0 : degree);
    const Eigen::Index K = fit.basis.size();
    if (K > 1024) throw ConfigError("solver.degree", "regression basis too large");
    const auto N = static_cast<std::size_t>(features.rows());
    const Eigen::Index m = targets.cols();

    // per-chunk partial sums combined in chunk order
    const std::size_t chunks = (N + kPathChunk - 1) / kPathChunk;
    std::vector<Matrix> AtA(chunks, Matrix::Zero(K, K)), Atb(chunks, Matrix::Zero(K, m));
    parallel_chunks(N, kPathChunk, [&](std::size_t n0, std::size_t n1) {
        const std::size_t c = n0 / kPathChunk;
        Matrix Phi(static_cast<Eigen::Index>(n1 - n0), K);
        double z[16];
        for (std::size_t n = n0; n < n1; ++n) {
            fit.standardizer.apply(features.row(static_cast<Eigen::Index>(n)).data(), z);
            Vector phi(K);
            fit.basis.evaluate(z, phi.data());
            Phi.row(static_cast<Eigen::Index>(n - n0)) = phi.transpose();
        }
        AtA[c].noalias() = Phi.transpose() * Phi;
        Atb[c].noalias() = Phi.transpose() * targets.middleRows(static_cast<Eigen::Index>(n0), static_cast<Eigen::Index>(n1 - n0));
    });
    Matrix A = Matrix::Zero(K, K), B = Matrix::Zero(K, m);
    for (std::size_t c = 0; c < chunks; ++c) {
        A += AtA[c];
        B += Atb[c];
    }
    const double ridge = ridge_factor * static_cast<double>(N);
    for (Eigen::Index k = 1; k < K; ++k) A(k, k) += ridge;

    Eigen::SelfAdjointEigenSolver<Matrix> es(A, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()(0), hi = es.eigenvalues()(K - 1);
    fit.condition = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(fit.condition <= kMaxCondition))
        throw NumericalError("slice " + std::to_string(slice) + ": singular normal equations (condition " + std::to_string(fit.condition) + ")");
    fit.coeffs = A.ldlt().solve(B);
    return fit;
}

}  // namespace volterra
