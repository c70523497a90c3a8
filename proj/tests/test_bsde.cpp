#include "volterra/bsde.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace volterra;

namespace {

BsdeProblem base_problem(KernelSpec k, std::string_view g, std::size_t M = 50, std::size_t N = 20000) {
    BsdeProblem p;
    p.kernel = std::move(k);
    p.drift = DriftSpec::zero(1);
    p.grid = Grid::uniform(M, 1.0);
    p.paths = N;
    p.terminal = FunctionalSpec::expression({1.0}, 1, g, {"x"});
    p.driver = DriverSpec::zero(1);
    return p;
}

}  // namespace

TEST(Driver, VariableNamesAndDependencies) {
    EXPECT_EQ(DriverSpec::variable_names(2), (std::vector<std::string>{"t", "y", "z1", "z2", "m1", "m2", "x1", "x2"}));
    const auto f = DriverSpec::expression("sin(y) + z/2", 1, 1.5);
    EXPECT_TRUE(f.depends_on_yz());
    EXPECT_FALSE(f.depends_on_state());
    const double z = 0.4, m = 0.0, x = 0.0;
    EXPECT_NEAR(f(0.1, 0.3, &z, &m, &x), std::sin(0.3) + 0.2, 1e-15);
    const auto g = DriverSpec::expression("t * x", 1, 0.0);
    EXPECT_FALSE(g.depends_on_yz());
    EXPECT_TRUE(g.depends_on_state());
    EXPECT_TRUE(DriverSpec::expression("0", 1, 0.0).is_zero());
    EXPECT_THROW(DriverSpec::expression("q + y", 1, 1.0), ConfigError);
}

TEST(Driver, LipschitzProbeBoundedByConstant) {
    const auto f = DriverSpec::expression("sin(y) + z/2", 1, 1.5);
    const double L = probe_lipschitz(f, 1.0, 2000, 1);
    EXPECT_LE(L, 1.0 + 1e-12);  // |dy| + |dz| metric: max(1, 1/2)
    EXPECT_GT(L, 0.5);
}

TEST(Bsde, ZeroDriverTerminalValue) {
    // Y_t = E[X_T | F_t] and Z = k(T,t)^2 for xi = X_T
    const double l = 1.0;
    const auto sol = picard_solve(base_problem(KernelSpec::exponential(l), "x"), 1);
    EXPECT_NEAR(sol.Y_s, 0.0, 4 * sol.Y_s_se + 1e-12);
    const std::size_t P = sol.grid.size();
    for (std::size_t i : {0u, 25u, 49u}) {
        double zbar = 0.0;
        for (std::size_t n = 0; n < sol.paths; ++n) zbar += sol.z(n, i)(0);
        zbar /= static_cast<double>(sol.paths);
        const double t = sol.grid[i];
        // exact-block weight over [t, t+dt]
        const double dt = sol.grid.width(i);
        const double w = (std::exp(-l * (1 - t - dt)) - std::exp(-l * (1 - t))) / (l * dt);
        EXPECT_NEAR(zbar, w * w, 0.02) << i;
    }
    for (std::size_t n = 0; n < 10; ++n) EXPECT_NEAR(sol.y(n, 10), sol.prediction[n * P + 10], 0.02);
}

TEST(Bsde, BrownianZIsOneForTerminalValue) {
    const auto sol = picard_solve(base_problem(KernelSpec::brownian(1), "x", 20, 20000), 2);
    for (std::size_t i = 0; i < 20; ++i) {
        double zbar = 0.0;
        for (std::size_t n = 0; n < sol.paths; ++n) zbar += sol.z(n, i)(0);
        EXPECT_NEAR(zbar / static_cast<double>(sol.paths), 1.0, 4 * std::sqrt(2.0 / 20000));
        for (std::size_t n = 0; n < 50; ++n) EXPECT_NEAR(sol.z(n, i)(0), 1.0, 0.25);
    }
}

TEST(Bsde, SecondMomentMatchesVariance) {
    const auto sol = picard_solve(base_problem(KernelSpec::brownian(1), "x^2", 50, 40000), 3);
    EXPECT_NEAR(sol.Y_s, 1.0, 4 * sol.Y_s_se);
}

TEST(Bsde, LinearDriverDiscounts) {
    // f = -y: Y_0 = e^{-T} E[xi]
    auto p = base_problem(KernelSpec::brownian(1), "x^2", 100, 40000);
    p.driver = DriverSpec::expression("-y", 1, 1.0);
    const auto explicit_sol = picard_solve(p, 4);
    p.implicit = true;
    const auto implicit_sol = picard_solve(p, 4);
    const double exact = std::exp(-1.0);
    EXPECT_NEAR(explicit_sol.Y_s, exact, 4 * explicit_sol.Y_s_se + 0.01);
    EXPECT_NEAR(implicit_sol.Y_s, exact, 4 * implicit_sol.Y_s_se + 0.01);
    // explicit Euler over-discounts, implicit under-discounts
    EXPECT_LT(explicit_sol.Y_s, implicit_sol.Y_s);
}

TEST(Bsde, PicardAgreesWithImplicitSweep) {
    auto p = base_problem(KernelSpec::exponential(1.0), "cos(x)", 50, 20000);
    p.driver = DriverSpec::expression("sin(y) + z/2", 1, 1.5);
    p.implicit = true;
    const auto a = picard_solve(p, 5);
    p.implicit = false;
    p.picard = 30;
    const auto b = picard_solve(p, 5);
    EXPECT_GT(b.iterations, 1);
    EXPECT_NEAR(a.Y_s, b.Y_s, 2e-3);
    for (std::size_t q = 1; q < b.picard_deltas.size(); ++q) EXPECT_LT(b.picard_deltas[q], b.picard_deltas[q - 1]);
}

TEST(Bsde, PicardStopsEarlyWithoutYZDependence) {
    auto p = base_problem(KernelSpec::brownian(1), "x", 20, 2000);
    p.driver = DriverSpec::expression("x", 1, 0.0);
    p.picard = 10;
    const auto sol = picard_solve(p, 6);
    EXPECT_EQ(sol.iterations, 2);
}

TEST(Bsde, DeterministicForFixedSeed) {
    auto p = base_problem(KernelSpec::exponential(0.5), "x^2", 20, 3000);
    p.driver = DriverSpec::expression("-0.5*y", 1, 0.5);
    const auto a = picard_solve(p, 7), b = picard_solve(p, 7), c = picard_solve(p, 8);
    EXPECT_EQ(a.Y, b.Y);
    EXPECT_EQ(a.Z, b.Z);
    EXPECT_NE(a.Y, c.Y);
}

TEST(Bsde, ConditionedSolveStartsAtS) {
    auto p = base_problem(KernelSpec::brownian(1), "x^2", 40, 20000);
    p.condition = ConditionData::observed(0.5, {0.5}, Matrix::Constant(1, 1, 0.6));
    const auto sol = picard_solve(p, 9);
    EXPECT_EQ(sol.s_index, 20u);
    EXPECT_NEAR(sol.Y_s, 0.36 + 0.5, 4 * sol.Y_s_se);
}

TEST(Bsde, EvaluateYAtHorizonIsExact) {
    const auto p = base_problem(KernelSpec::brownian(1), "x^2", 10, 1000);
    const auto est = evaluate_Y(p, {ConditionData::observed(1.0, {1.0}, Matrix::Constant(1, 1, 1.5))}, 1);
    ASSERT_EQ(est.size(), 1u);
    EXPECT_DOUBLE_EQ(est[0].value, 2.25);
    EXPECT_EQ(est[0].se, 0.0);
}

TEST(Bsde, PathDependentTerminalWithAnchorFeatures) {
    // xi = X_{1/2} + X_1: Y_0 = 0, and Y_{1/2} = 2 X_{1/2} for Brownian motion
    BsdeProblem p = base_problem(KernelSpec::brownian(1), "x", 20, 10000);
    p.terminal = FunctionalSpec::expression({0.5, 1.0}, 1, "x1 + x2", {"x1", "x2"});
    p.features.kinds = {FeatureKind::prediction, FeatureKind::anchors};
    p.features.anchor_times = {0.5};
    const auto sol = picard_solve(p, 10);
    EXPECT_NEAR(sol.Y_s, 0.0, 4 * sol.Y_s_se);
    for (std::size_t n = 0; n < 20; ++n) EXPECT_NEAR(sol.y(n, 10), 2 * sol.batch->value(n, 10)(0), 0.02);
}

TEST(Bsde, ValidationErrors) {
    auto p = base_problem(KernelSpec::brownian(1), "x");
    p.driver = DriverSpec::zero(2);
    EXPECT_THROW(picard_solve(p, 1), ConfigError);
    p = base_problem(KernelSpec::brownian(1), "x");
    p.paths = 1;
    EXPECT_THROW(picard_solve(p, 1), ConfigError);
    p = base_problem(KernelSpec::brownian(1), "x");
    p.degree = 12;
    EXPECT_THROW(picard_solve(p, 1), ConfigError);
}

TEST(Bsde, NonContractingPicardIsReported) {
    // a strongly expansive driver with a coarse grid has no contraction
    auto p = base_problem(KernelSpec::brownian(1), "x^2", 4, 2000);
    p.driver = DriverSpec::expression("40*y", 1, 40.0);
    p.picard = 50;
    EXPECT_THROW(picard_solve(p, 11), NumericalError);
}
