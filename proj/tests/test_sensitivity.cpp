#include <cmath>

#include <gtest/gtest.h>

#include "l2cal/bench.hpp"
#include "l2cal/sensitivity.hpp"
#include "oracles.hpp"

using namespace l2cal;

namespace {

CubeSurface linear(const Eigen::VectorXd& w) {
    return [w](const Eigen::MatrixXd& u) { return Eigen::VectorXd(u * w); };
}

/// Var of (U - c)^2 for U uniform on [0, 1].
double quad_var(double c) {
    const double a = 1.0 - c;
    const double m2 = (a * a * a + c * c * c) / 3.0;
    const double m4 = (std::pow(a, 5) + std::pow(c, 5)) / 5.0;
    return m4 - m2 * m2;
}

}  // namespace

TEST(Sobol, SingleVariableFunction) {
    const auto r = sobol_first_order(linear(Eigen::Vector2d(1.0, 0.0)), 2, {0, 1}, 1 << 14, 50, 3);
    EXPECT_NEAR(r.indices(0), 1.0, 0.02);
    EXPECT_NEAR(r.indices(1), 0.0, 0.02);
    for (int k = 0; k < 2; ++k) {
        EXPECT_LE(r.ci_lo(k), r.indices(k));
        EXPECT_GE(r.ci_hi(k), r.indices(k));
    }
}

TEST(Sobol, IshigamiClosedForm) {
    const double pi = std::numbers::pi;
    const auto r = sobol_first_order(
        [pi](const Eigen::MatrixXd& u) {
            Eigen::VectorXd f(u.rows());
            for (Eigen::Index i = 0; i < u.rows(); ++i)
                f(i) = oracle::ishigami(-pi + 2 * pi * u(i, 0), -pi + 2 * pi * u(i, 1), -pi + 2 * pi * u(i, 2));
            return f;
        },
        3, {0, 1, 2}, 1 << 14, 0, 11);
    const Eigen::Vector3d ref = oracle::ishigami_indices();
    EXPECT_NEAR(ref(0), 0.3139, 1e-4);
    EXPECT_NEAR(ref(1), 0.4424, 1e-4);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.indices(k), ref(k), 0.03) << k;
}

TEST(Sobol, AdditiveIndicesSumToOneAndIgnoredInputIsZero) {
    // S_i proportional to w_i^2 for a linear function of uniform inputs
    const Eigen::Vector4d w(1.0, 2.0, 3.0, 0.0);
    const auto r = sobol_first_order(linear(w), 4, {0, 1, 2, 3}, 20000, 0, 5);
    EXPECT_NEAR(r.indices.sum(), 1.0, 0.03);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.indices(k), w(k) * w(k) / 14.0, 0.03);
    EXPECT_NEAR(r.indices(3), 0.0, 0.02);
}

TEST(Sobol, ImperfectStudySurfaceMatchesVarianceDecomposition) {
    const auto sc = BenchScenario::make(Study::Study42, 50, 400, 1, 1);
    const auto r = sobol_first_order(
        [&sc](const Eigen::MatrixXd& u) {
            Eigen::VectorXd f(u.rows());
            for (Eigen::Index i = 0; i < u.rows(); ++i)
                f(i) = sc.p_formula(u.row(i).head(2).transpose(), u.row(i).tail(3).transpose());
            return f;
        },
        5, {2, 3, 4}, 40000, 0, 7);
    // Var of eta + delta over the unit square by tensor Simpson.
    const int m = 400;
    double s1 = 0.0, s2 = 0.0;
    auto wt = [m](int i) { return (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0); };
    for (int i = 0; i <= m; ++i) {
        for (int j = 0; j <= m; ++j) {
            const double x1 = static_cast<double>(i) / m, x2 = static_cast<double>(j) / m;
            const double v = BenchScenario::eta42(x1, x2) + BenchScenario::delta42(x1, x2);
            const double w = wt(i) * wt(j) / (9.0 * m * m);
            s1 += w * v;
            s2 += w * v * v;
        }
    }
    const double var_x = s2 - s1 * s1;
    const Eigen::Vector3d c(0.3, 0.5, 0.7);
    double total = var_x;
    Eigen::Vector3d part;
    for (int j = 0; j < 3; ++j) total += (part(j) = 0.35 * 0.35 * quad_var(c(j)));
    for (int j = 0; j < 3; ++j) {
        EXPECT_GT(r.indices(j), 0.0);
        EXPECT_NEAR(r.indices(j), part(j) / total, 0.02) << j;
    }
    // theta1 and theta3 sit symmetrically about 1/2, so their terms match.
    EXPECT_NEAR(r.indices(0), r.indices(2), 0.02);
}

TEST(Sobol, DeterministicAndIntervalsShrinkWithSampleSize) {
    const auto f = linear(Eigen::Vector3d(1.0, 0.5, 0.25));
    const auto a = sobol_first_order(f, 3, {0, 1, 2}, 2000, 100, 4);
    const auto b = sobol_first_order(f, 3, {0, 1, 2}, 2000, 100, 4);
    EXPECT_EQ(a.indices, b.indices);
    EXPECT_EQ(a.ci_lo, b.ci_lo);
    std::vector<double> small, large;
    for (std::uint64_t s = 1; s <= 10; ++s) {
        small.push_back((sobol_first_order(f, 3, {0}, 2000, 100, s).ci_hi - sobol_first_order(f, 3, {0}, 2000, 100, s).ci_lo)(0));
        large.push_back((sobol_first_order(f, 3, {0}, 8000, 100, s).ci_hi - sobol_first_order(f, 3, {0}, 8000, 100, s).ci_lo)(0));
    }
    EXPECT_LT(oracle::median(large), oracle::median(small));
}

TEST(Sobol, RejectsConstantSurfacesAndBadArguments) {
    const CubeSurface flat = [](const Eigen::MatrixXd& u) { return Eigen::VectorXd::Constant(u.rows(), 0.3); };
    EXPECT_THROW(sobol_first_order(flat, 2, {0}, 2000, 0, 1), NumericalError);
    EXPECT_THROW(sobol_first_order(linear(Eigen::Vector2d(1, 0)), 2, {0}, 999, 0, 1), InputError);
    EXPECT_THROW(sobol_first_order(linear(Eigen::Vector2d(1, 0)), 2, {2}, 2000, 0, 1), InputError);
    EXPECT_THROW(sobol_first_order(linear(Eigen::Vector2d(1, 0)), 2, {0}, 2000, -1, 1), InputError);
}

TEST(Sobol, EmulatorReportsThetaComponentsByDefault) {
    const auto sc = BenchScenario::make(Study::Study41, 50, 300, 1, 1);
    const GpcModel m = fit_gpc(generate_computer(sc, 3), KernelSpec::rbf(10.0));
    const auto r = sobol_emulator(m, 4000, 20, 2);
    ASSERT_EQ(r.inputs, std::vector<int>{1});
    EXPECT_GE(r.indices(0), -0.1);
    EXPECT_LE(r.indices(0), 1.1);
    const auto rx = sobol_emulator(m, 4000, 20, 2, true);
    ASSERT_EQ(rx.inputs, (std::vector<int>{0, 1}));
    EXPECT_EQ(rx.indices(1), r.indices(0));
}
