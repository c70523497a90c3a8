#include "volterra/mild.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace volterra;

namespace {

const double kOu2 = (1 - std::exp(-2.0)) / 2;  // int_0^1 e^{-2(1-r)} dr

}

TEST(Estimate, MeanAndStandardError) {
    const auto e = mean_and_se({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(e.value, 2.5);
    EXPECT_NEAR(e.se, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
}

TEST(Projector, BrownianSecondMoment) {
    const auto cond = ConditionData::observed(0.5, {0.5}, Matrix::Constant(1, 1, 0.8));
    const PathFunctional G = [](const PathBatch& b, std::size_t n) { return std::pow(b.value(n, b.grid().intervals())(0), 2); };
    const auto e = projector(KernelSpec::brownian(1), DriftSpec::zero(1), cond, Grid::uniform(10, 1.0), G, 50000, 3);
    EXPECT_NEAR(e.value, 0.64 + 0.5, 4 * e.se);
}

TEST(GaussianOracle, MomentsOfTerminalValue) {
    const auto none = ConditionData::unconditioned();
    const auto b0 = DriftSpec::zero(1);
    EXPECT_NEAR(oracle_gaussian_terminal(KernelSpec::brownian(1), b0, none, 1.0, [](const Vector& x) { return std::pow(x(0), 4); }), 3.0, 1e-10);
    EXPECT_NEAR(oracle_gaussian_terminal(KernelSpec::exponential(1.0), b0, none, 1.0, [](const Vector& x) { return x(0) * x(0); }), kOu2, 1e-10);
    // E cos(X) = exp(-var/2)
    EXPECT_NEAR(oracle_gaussian_terminal(KernelSpec::exponential(1.0), b0, none, 1.0, [](const Vector& x) { return std::cos(x(0)); }),
                std::exp(-kOu2 / 2), 1e-12);
}

TEST(GaussianOracle, ConditionedOu) {
    const double s = 0.5, a = 0.3;
    const auto cond = ConditionData::observed(s, {s}, Matrix::Constant(1, 1, a));
    const double mean = std::exp(-(1 - s)) * a, var = (1 - std::exp(-2 * (1 - s))) / 2;
    EXPECT_NEAR(oracle_gaussian_terminal(KernelSpec::exponential(1.0), DriftSpec::zero(1), cond, 1.0, [](const Vector& x) { return x(0) * x(0); }),
                mean * mean + var, 1e-10);
}

TEST(GaussianOracle, TwoDimensionalCrossMoment) {
    KernelSpec K = KernelSpec::brownian(2);
    K.set(1, 0, ScalarKernel::brownian(0.5));
    // X2 = 0.5 B1 + B2: E[X1 X2] = 0.5 T, E[X2^2] = 1.25 T
    const auto g = [](const Vector& x) { return x(0) * x(1) + x(1) * x(1); };
    EXPECT_NEAR(oracle_gaussian_terminal(K, DriftSpec::zero(2), ConditionData::unconditioned(), 2.0, g), 1.0 + 2.5, 1e-10);
}

TEST(PdeOracle, ZeroDriverSecondMoment) {
    const auto f = DriverSpec::zero(1);
    const auto r = oracle_markovian_pde(KernelSpec::brownian(1), 0.0, 0.4, 0.0, [](double x) { return x * x; }, f, 1.0);
    EXPECT_NEAR(r.value, 0.16 + 1.0, 1e-4);
    EXPECT_LT(r.truncated_mass, 1e-10);
}

TEST(PdeOracle, LinearDriverDiscounts) {
    const auto f = DriverSpec::expression("-y", 1, 1.0);
    const auto r = oracle_markovian_pde(KernelSpec::exponential(1.0), 0.0, 0.0, 0.0, [](double x) { return std::cos(x); }, f, 1.0);
    EXPECT_NEAR(r.value, std::exp(-1.0) * std::exp(-kOu2 / 2), 1e-5);
}

TEST(PdeOracle, BracketDensityDriver) {
    // g = x, f = z: u_x = 1, so Z = k(T,t)^2 and u(0,x0) = x0 + int k^2
    const auto f = DriverSpec::expression("z", 1, 1.0);
    const auto r = oracle_markovian_pde(KernelSpec::exponential(1.0), 0.0, 0.2, 0.0, [](double x) { return x; }, f, 1.0);
    EXPECT_NEAR(r.value, 0.2 + kOu2, 1e-5);
}

TEST(PdeOracle, RefinementIsStable) {
    const auto f = DriverSpec::expression("sin(y) + z/2", 1, 1.5);
    const auto g = [](double x) { return std::cos(x); };
    const double a = oracle_markovian_pde(KernelSpec::exponential(1.0), 0.0, 0.0, 0.0, g, f, 1.0).value;
    const double b = oracle_markovian_pde(KernelSpec::exponential(1.0), 0.0, 0.0, 0.0, g, f, 1.0, PdeOptions{1601, 8.0, 800, 1e-10, 100}).value;
    EXPECT_NEAR(a, b, 1e-5);
}

TEST(PdeOracle, AtHorizonReturnsTerminal) {
    const auto r = oracle_markovian_pde(KernelSpec::brownian(1), 1.0, 0.7, 0.0, [](double x) { return x * x; }, DriverSpec::zero(1), 1.0);
    EXPECT_DOUBLE_EQ(r.value, 0.49);
}

TEST(Classical, SecondMomentSolutionsSolveThePde) {
    const Grid g = Grid::uniform(16, 1.0);
    for (const auto& [K, sk] : {std::pair{KernelSpec::brownian(1), ScalarKernel::brownian()},
                                std::pair{KernelSpec::exponential(0.5), ScalarKernel::exponential(0.5)}}) {
        const auto phi = second_moment_solution(sk, 1.0);
        const ClassicalSurrogate sur(phi, K, 1.0);
        const auto batch = VolterraSampler(K, DriftSpec::zero(1), g, sur.sampler_options()).sample(ConditionData::unconditioned(), 10, 1);
        std::vector<std::pair<std::size_t, std::size_t>> pts;
        for (std::size_t n = 0; n < 10; ++n) pts.emplace_back(n, n);
        EXPECT_LT(classical_check(phi, K, DriftSpec::zero(1), DriverSpec::zero(1), batch, pts), 1e-10);
        EXPECT_GT(classical_check(FunctionalSpec::terminal_monomial(1.0, 2, 0, 1), K, DriftSpec::zero(1), DriverSpec::zero(1), batch, pts), 0.1);
    }
    EXPECT_THROW(second_moment_solution(ScalarKernel::fbm(0.7), 1.0), DomainError);
}

TEST(Mild, ClassicalSolutionResidualsVanish) {
    const auto K = KernelSpec::exponential(1.0);
    const auto phi = second_moment_solution(ScalarKernel::exponential(1.0), 1.0);
    const ClassicalSurrogate sur(phi, K, 1.0);
    const Grid g = Grid::uniform(32, 1.0);
    const auto rep = mild_residuals(sur, K, DriftSpec::zero(1), DriverSpec::zero(1), ConditionData::unconditioned(), g, MildOptions{}, 5);
    EXPECT_TRUE(rep.pass());
    EXPECT_NEAR(rep.y_s, kOu2, 1e-12);
    EXPECT_EQ(rep.outer_times.size(), 17u);
}

TEST(Mild, HandSolvableLineTwo) {
    // f = 0, xi = X_T, Brownian, eta(s) = a: Y_s m_s = a^2, E[xi m_T] = a^2 + T - s, int E[Z] = T - s
    const double s = 0.5, a = -0.6;
    const auto K = KernelSpec::brownian(1);
    const auto phi = FunctionalSpec::terminal_monomial(1.0, 1, 0, 1);
    const ClassicalSurrogate sur(phi, K, 1.0);
    const auto cond = ConditionData::observed(s, {s}, Matrix::Constant(1, 1, a));
    const auto rep = mild_residuals(sur, K, DriftSpec::zero(1), DriverSpec::zero(1), cond, Grid::uniform(32, 1.0), MildOptions{20000, 16, 3.0}, 6);
    ASSERT_EQ(rep.line2.size(), 1u);
    EXPECT_NEAR(rep.line2[0].lhs, a * a, 1e-12);
    EXPECT_NEAR(rep.line2[0].terminal, a * a + (1 - s), 4 * std::sqrt(2.0 * 0.25 / 20000) + 0.02);
    EXPECT_NEAR(rep.line2[0].integral, 1 - s, 1e-12);
    EXPECT_TRUE(rep.pass());
}

TEST(Mild, ExactAtHorizon) {
    const auto K = KernelSpec::brownian(1);
    const ClassicalSurrogate sur(FunctionalSpec::terminal_monomial(1.0, 2, 0, 1), K, 1.0);
    const auto cond = ConditionData::observed(1.0, {1.0}, Matrix::Constant(1, 1, 0.9));
    const auto rep = mild_residuals(sur, K, DriftSpec::zero(1), DriverSpec::zero(1), cond, Grid::uniform(8, 1.0), MildOptions{}, 7);
    EXPECT_TRUE(rep.exact);
    EXPECT_NEAR(rep.line1.residual, 0.0, 1e-14);
}

TEST(Mild, WrongCandidateIsRejected) {
    // X_T^2 alone is not a solution with f = 0: line 1 misses by int k^2
    const auto K = KernelSpec::brownian(1);
    const ClassicalSurrogate sur(FunctionalSpec::terminal_monomial(1.0, 2, 0, 1), K, 1.0);
    const auto rep = mild_residuals(sur, K, DriftSpec::zero(1), DriverSpec::zero(1), ConditionData::unconditioned(), Grid::uniform(16, 1.0),
                                    MildOptions{}, 8);
    EXPECT_FALSE(rep.pass());
    EXPECT_NEAR(rep.line1.residual, -1.0, 0.05);
}

TEST(Mild, RegressionSurrogatePasses) {
    BsdeProblem p;
    p.kernel = KernelSpec::exponential(1.0);
    p.drift = DriftSpec::zero(1);
    // weak y-dependence keeps the O(dt) bias of the time stepping below the MC error
    p.grid = Grid::uniform(80, 1.0);
    p.paths = 20000;
    p.terminal = FunctionalSpec::expression({1.0}, 1, "cos(x)", {"x"});
    p.driver = DriverSpec::expression("-0.5*y", 1, 0.5);
    p.implicit = true;
    auto sol = std::make_shared<const BsdeSolution>(picard_solve(p, 9));
    const RegressionSurrogate sur(p, sol);
    const auto rep = mild_residuals(sur, p.kernel, p.drift, p.driver, p.condition, p.grid, MildOptions{}, 10);
    EXPECT_TRUE(rep.pass()) << rep.line1.residual << " se " << rep.line1.se << " allow " << rep.line1.allowance << " | " << rep.line2[0].residual << " se " << rep.line2[0].se;
}

TEST(Mild, SingularKernelAtOriginIsReported) {
    const auto K = KernelSpec::fbm(0.7);
    const ClassicalSurrogate sur(FunctionalSpec::terminal_monomial(1.0, 1, 0, 1), K, 1.0);
    EXPECT_THROW(mild_residuals(sur, K, DriftSpec::zero(1), DriverSpec::zero(1), ConditionData::unconditioned(), Grid::uniform(16, 1.0),
                                MildOptions{1000, 16, 3.0}, 11),
                 NumericalError);
}
