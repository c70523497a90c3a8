#include "volterra/kernels.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace volterra;

namespace {

// fBm covariance 1/2 (t^2H + u^2H - |t-u|^2H)
double fbm_cov(double H, double t, double u) {
    return 0.5 * (std::pow(t, 2 * H) + std::pow(u, 2 * H) - std::pow(std::abs(t - u), 2 * H));
}

// Molchan-Golosov kernel from its defining integral, by tanh-sinh quadrature.
double mg_direct(double H, double t, double s) {
    const double a = H - 0.5;
    const double c = std::sqrt(2 * H * std::tgamma(1.5 - H) / (std::tgamma(H + 0.5) * std::tgamma(2 - 2 * H)));
    boost::math::quadrature::tanh_sinh<double> ts;
    const double I = ts.integrate([&](double u) { return std::pow(u, a - 1) * std::pow(u - s, a); }, s, t);
    return c * (std::pow(t / s, a) * std::pow(t - s, a) - a * std::pow(s, -a) * I);
}

}  // namespace

TEST(Kernels, BasicFamilies) {
    const auto b = ScalarKernel::brownian(2.0);
    EXPECT_DOUBLE_EQ(b(0.7, 0.2), 2.0);
    EXPECT_DOUBLE_EQ(b(0.2, 0.7), 0.0);
    const auto e = ScalarKernel::exponential(1.5);
    EXPECT_NEAR(e(1.0, 0.4), std::exp(-0.9), 1e-15);
    EXPECT_DOUBLE_EQ(ScalarKernel::fbm(0.5)(0.8, 0.3), 1.0);
}

TEST(Kernels, InvalidParametersRejected) {
    EXPECT_THROW(ScalarKernel::fbm(1.0), ConfigError);
    EXPECT_THROW(ScalarKernel::fbm(0.0), ConfigError);
    EXPECT_THROW(ScalarKernel::exponential(-1.0), ConfigError);
    EXPECT_THROW(KernelSpec::diagonal(0, ScalarKernel::brownian()), ConfigError);
}

class MolchanGolosov : public ::testing::TestWithParam<double> {};

TEST_P(MolchanGolosov, ClosedFormMatchesDefiningIntegral) {
    const double H = GetParam();
    const auto k = ScalarKernel::fbm(H);
    for (double t : {0.3, 1.0})
        for (double s : {0.05, 0.4 * t, 0.9 * t}) EXPECT_NEAR(k(t, s), mg_direct(H, t, s), 1e-8 * (1 + std::abs(k(t, s)))) << t << " " << s;
}

TEST_P(MolchanGolosov, ProductIntegralIsFbmCovariance) {
    const double H = GetParam();
    const auto K = KernelSpec::fbm(H);
    for (double t : {0.25, 0.6, 1.0})
        for (double u : {0.1, 0.6, 1.0}) EXPECT_NEAR(cov_cs(K, 0.0, t, u)(0, 0), fbm_cov(H, t, u), 2e-6) << t << " " << u;
}

INSTANTIATE_TEST_SUITE_P(Hurst, MolchanGolosov, ::testing::Values(0.3, 0.7, 0.85));

TEST(Kernels, ExponentialProductIntegral) {
    const double l = 0.5;
    const auto K = KernelSpec::exponential(l);
    for (double t : {0.3, 1.0})
        for (double u : {0.5, 1.0}) {
            const double m = std::min(t, u);
            const double expect = std::exp(-l * (t + u)) * (std::exp(2 * l * m) - 1) / (2 * l);
            EXPECT_NEAR(kernel_product_integral(K, t, u, 0.0, m)(0, 0), expect, 1e-12);
        }
    // conditioned covariance starts at s
    EXPECT_NEAR(cov_cs(K, 0.5, 1.0, 1.0)(0, 0), (1 - std::exp(-2 * l * 0.5)) / (2 * l), 1e-12);
    EXPECT_DOUBLE_EQ(cov_cs(K, 0.5, 0.4, 1.0)(0, 0), 0.0);
}

TEST(Kernels, MatrixKernelAndIntegral) {
    KernelSpec K = KernelSpec::brownian(2);
    K.set(1, 0, ScalarKernel::exponential(1.0, 0.5));
    const Matrix v = K(1.0, 0.0);
    EXPECT_DOUBLE_EQ(v(0, 1), 0.0);
    EXPECT_NEAR(v(1, 0), 0.5 * std::exp(-1.0), 1e-15);
    const Matrix I = kernel_integral(K, 1.0, 0.0, 1.0);
    EXPECT_NEAR(I(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(I(1, 0), 0.5 * (1 - std::exp(-1.0)), 1e-12);
    const Matrix C = cov_cs(K, 0.0, 1.0, 1.0);
    EXPECT_NEAR(C(0, 1), 0.5 * (1 - std::exp(-1.0)), 1e-12);
    EXPECT_NEAR(C(1, 1), 1.0 + 0.25 * (1 - std::exp(-2.0)) / 2, 1e-12);
}

TEST(Kernels, TableInterpolatesBilinearly) {
    // k(t,r) = t + 2r sampled on a lattice reproduces exactly below the diagonal
    std::vector<double> ts, rs, vs;
    for (double t : {0.0, 0.5, 1.0})
        for (double r : {0.0, 0.5, 1.0}) {
            ts.push_back(t);
            rs.push_back(r);
            vs.push_back(t + 2 * r);
        }
    const auto tab = ScalarKernel::table(TableSamples::from_rows(ts, rs, vs));
    EXPECT_NEAR(tab(0.8, 0.3), 0.8 + 0.6, 1e-14);
    EXPECT_DOUBLE_EQ(tab(0.3, 0.8), 0.0);
    EXPECT_THROW(TableSamples::from_rows({0.0, 0.0, 1.0}, {0.0, 1.0, 0.0}, {1, 2, 3}), ConfigError);
}

TEST(Kernels, DriftIntegral) {
    const auto b = DriftSpec::constant((Vector(2) << 1.0, -2.0).finished());
    const Vector I = b.integral(0.6, 0.0, 1.0);  // clipped at t
    EXPECT_NEAR(I(0), 0.6, 1e-15);
    EXPECT_NEAR(I(1), -1.2, 1e-15);
    EXPECT_TRUE(DriftSpec::zero(1).integral(1.0, 0.0, 1.0).isZero());
}

TEST(Hypotheses, RegularKernelsPass) {
    const Grid g = Grid::uniform(32, 1.0);
    for (const auto& k : {KernelSpec::brownian(1), KernelSpec::exponential(1.0)}) {
        const auto rep = check_hypotheses(k, DriftSpec::zero(1), g);
        EXPECT_TRUE(rep.all_pass());
        EXPECT_FALSE(rep.experimental);
    }
}

TEST(Hypotheses, FbmFlaggedExperimental) {
    const auto rep = check_hypotheses(KernelSpec::fbm(0.7), DriftSpec::zero(1), Grid::uniform(32, 1.0));
    EXPECT_TRUE(rep.experimental);
    EXPECT_FALSE(rep.right_derivative_bounded);
    EXPECT_FALSE(rep.notes.empty());
}

TEST(Hypotheses, RoughKernelUnboundedNearOrigin) {
    const auto rep = check_hypotheses(KernelSpec::fbm(0.3), DriftSpec::zero(1), Grid::uniform(32, 1.0));
    EXPECT_FALSE(rep.all_pass());
}
