#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "l2cal/kernels.hpp"
#include "oracles.hpp"

using namespace l2cal;

namespace {

// K_nu(s) = int_0^inf exp(-s cosh t) cosh(nu t) dt
double bessel_k_integral(double nu, double s) {
    return oracle::simpson([&](double t) { return std::exp(-s * std::cosh(t)) * std::cosh(nu * t); }, 0.0, 12.0, 20000);
}

double matern_integral_form(double nu, double rho, double d) {
    const double s = 2.0 * std::sqrt(nu) * d / rho;
    return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(s, nu) * bessel_k_integral(nu, s);
}

Eigen::MatrixXd random_points(int n, int d, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Eigen::MatrixXd p(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) p(i, j) = U(gen);
    return p;
}

}  // namespace

TEST(Kernels, MaternAtZeroDistanceIsOne) {
    const Eigen::Vector2d a(0.3, 0.7);
    EXPECT_EQ(eval_kernel(KernelSpec::matern(2.5, 1.0), a, a), 1.0);
}

TEST(Kernels, RbfDirectSubstitution) {
    const Eigen::VectorXd a = Eigen::VectorXd::Zero(1);
    const Eigen::VectorXd b = Eigen::VectorXd::Constant(1, std::sqrt(0.1));
    EXPECT_NEAR(eval_kernel(KernelSpec::rbf(21.0), a, b), 0.12246, 5e-6);
}

TEST(Kernels, MaternFiveHalvesMatchesBesselIntegral) {
    const double d = 0.3, rho = 0.5;
    const double rp = rho / std::sqrt(2.0);  // s = sqrt(5) d / rp
    const double closed = (1.0 + std::sqrt(5.0) * d / rp + 5.0 * d * d / (3.0 * rp * rp)) * std::exp(-std::sqrt(5.0) * d / rp);
    const Eigen::VectorXd a = Eigen::VectorXd::Zero(1), b = Eigen::VectorXd::Constant(1, d);
    const double v = eval_kernel(KernelSpec::matern(2.5, rho), a, b);
    EXPECT_NEAR(v, closed, 1e-12);
    EXPECT_NEAR(v, matern_integral_form(2.5, rho, d), 1e-8);
}

TEST(Kernels, ClosedFormsAgreeWithBesselPathToRelativeTolerance) {
    for (double nu : {1.5, 2.5}) {
        for (double d : {1e-4, 0.01, 0.1, 0.5, 1.0, 2.0}) {
            const double s = 2.0 * std::sqrt(nu) * d / 0.7;
            const double closed = kernel_from_sqdist(KernelSpec::matern(nu, 0.7), d * d);
            EXPECT_NEAR(closed, detail::matern_bessel(nu, s), 1e-10 * closed) << "nu=" << nu << " d=" << d;
        }
    }
}

TEST(Kernels, GeneralNuUsesBesselForm) {
    for (double d : {0.05, 0.2, 0.6}) {
        const double v = kernel_from_sqdist(KernelSpec::matern(3.2, 0.8), d * d);
        EXPECT_NEAR(v, matern_integral_form(3.2, 0.8, d), 1e-7);
    }
    EXPECT_EQ(kernel_from_sqdist(KernelSpec::matern(3.2, 0.8), 0.0), 1.0);
}

TEST(Kernels, SymmetricAndMonotone) {
    const auto pts = random_points(30, 3, 4);
    for (const auto& spec : {KernelSpec::matern(2.5, 0.5), KernelSpec::matern(1.5, 2.0), KernelSpec::matern(2.2, 0.3),
                             KernelSpec::rbf(10.0)}) {
        for (int i = 0; i + 1 < pts.rows(); ++i) {
            const Eigen::VectorXd a = pts.row(i), b = pts.row(i + 1);
            EXPECT_EQ(eval_kernel(spec, a, b), eval_kernel(spec, b, a));
        }
        double prev = 1.0;
        for (int k = 1; k <= 200; ++k) {
            const double d = 0.01 * k;
            const double v = kernel_from_sqdist(spec, d * d);
            EXPECT_LE(v, prev);
            EXPECT_GE(v, 0.0);
            prev = v;
        }
    }
}

TEST(Kernels, DimensionMismatchIsInputError) {
    EXPECT_THROW(eval_kernel(KernelSpec::rbf(1.0), Eigen::Vector2d(0, 0), Eigen::Vector3d(0, 0, 0)), InputError);
    EXPECT_THROW(KernelSpec::matern(2.5, -1.0), InputError);
    EXPECT_THROW(KernelSpec::rbf(0.0), InputError);
}

TEST(Gram, SinglePointAndDuplicates) {
    const auto g1 = gram(KernelSpec::matern(2.5, 1.0), Eigen::MatrixXd::Constant(1, 2, 0.4), 1e-6);
    ASSERT_EQ(g1.entries.rows(), 1);
    EXPECT_DOUBLE_EQ(g1.entries(0, 0), 1.0 + 1e-6);

    const auto g2 = gram(KernelSpec::matern(2.5, 1.0), Eigen::MatrixXd::Constant(2, 2, 0.4));
    EXPECT_TRUE(g2.entries.isApprox(Eigen::MatrixXd::Ones(2, 2)));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g2.entries);
    EXPECT_NEAR(es.eigenvalues()(0), 0.0, 1e-14);
}

TEST(Gram, PositiveSemidefiniteAcrossSpecs) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto pts = random_points(5 + static_cast<int>(seed) * 3, 2, seed);
        for (const auto& spec : {KernelSpec::matern(2.5, 0.5), KernelSpec::matern(1.5, 1.0), KernelSpec::rbf(3.0)}) {
            const auto g = gram(spec, pts);
            EXPECT_EQ((g.entries - g.entries.transpose()).cwiseAbs().maxCoeff(), 0.0);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.entries);
            EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
            for (Eigen::Index i = 0; i < pts.rows(); ++i)
                for (Eigen::Index j = 0; j < pts.rows(); ++j)
                    EXPECT_EQ(g.entries(i, j), eval_kernel(spec, pts.row(i).transpose(), pts.row(j).transpose()));
        }
    }
}

TEST(Gram, JitterEscalatesOnDuplicatePoints) {
    Eigen::MatrixXd pts(3, 1);
    pts << 0.2, 0.2, 0.2;
    auto g = gram(KernelSpec::rbf(1.0), pts);
    const auto llt = cholesky_with_jitter(g);
    EXPECT_EQ(llt.info(), Eigen::Success);
    EXPECT_GE(g.jitter, kJitterStart);
    EXPECT_LE(g.jitter, kJitterMax);
}

TEST(Gram, JitterFailureCarriesLastJitter) {
    GramMatrix g{Eigen::MatrixXd::Identity(2, 2), 0.0};
    g.entries(0, 0) = -1.0;
    try {
        cholesky_with_jitter(g);
        FAIL() << "expected a numerical error";
    } catch (const NumericalError& e) {
        EXPECT_NEAR(e.jitter(), kJitterMax, 1e-12);
    }
}

TEST(Gram, RejectsBadInput) {
    EXPECT_THROW(gram(KernelSpec::rbf(1.0), Eigen::MatrixXd(0, 2)), InputError);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 1);
    bad(1, 0) = std::nan("");
    EXPECT_THROW(gram(KernelSpec::rbf(1.0), bad), InputError);
}
