#include <cmath>

#include <gtest/gtest.h>

#include "l2cal/bench.hpp"
#include "l2cal/calibrator.hpp"
#include "l2cal/knn.hpp"

using namespace l2cal;

namespace {

Eigen::VectorXd th(double v) { return Eigen::VectorXd::Constant(1, v); }

double eta41_unit(double x) { return BenchScenario::eta41(x); }

EtaSurface eta41() {
    return [](const Eigen::MatrixXd& x) {
        Eigen::VectorXd out(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = eta41_unit(x(i, 0));
        return out;
    };
}

/// p(x, theta) = eta(x) + sum_j (theta_j - c_j)^2
PSurface shifted(const Eigen::VectorXd& c) {
    return [c](const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
        Eigen::VectorXd out(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = eta41_unit(x(i, 0)) + (t - c).squaredNorm();
        return out;
    };
}

L2Objective fitted_objective(std::uint64_t seed) {
    const auto sc = BenchScenario::make(Study::Study41, 50, 300, 1, 1);
    const PhysicalDataset phys = generate_physical(sc, seed);
    const ComputerDataset comp = generate_computer(sc, seed);
    const KlrModel klr = fit_klr(phys, KernelSpec::matern(2.5, 0.5), 1e-3);
    const GpcModel gpc = fit_gpc(comp, KernelSpec::rbf(30.0));
    return L2Objective::from_models(klr, gpc, 2000, QuadRule::Sobol, seed);
}

}  // namespace

TEST(L2Distance, IdenticalSurfacesGiveZeroEverywhere) {
    const auto obj = L2Objective::build(
        eta41(), [](const Eigen::MatrixXd& x, const Eigen::VectorXd&) { return eta41()(x); }, 1, 1, 1000, QuadRule::Sobol, 1);
    for (double t : {0.0, 0.25, 0.5, 1.0}) EXPECT_EQ(l2_distance(obj, th(t)), 0.0);
}

TEST(L2Distance, ConstantGap) {
    const auto obj = L2Objective::build([](const Eigen::MatrixXd& x) { return Eigen::VectorXd::Constant(x.rows(), 0.7); },
                                        [](const Eigen::MatrixXd& x, const Eigen::VectorXd&) {
                                            return Eigen::VectorXd::Constant(x.rows(), 0.2);
                                        },
                                        1, 1, 500, QuadRule::MonteCarlo, 1);
    EXPECT_NEAR(l2_distance(obj, th(0.5)), 0.5, 1e-15);
}

TEST(L2Distance, TrueStudySurfacesVanishOnlyAtThetaStar) {
    const auto sc = BenchScenario::make(Study::Study41, 50, 400, 1, 1);
    const auto obj = sc.oracle_objective(10000, 2);
    EXPECT_LE(l2_distance(obj, th(0.3)), 1e-12);
    for (double t : {0.0, 0.1, 0.29, 0.31, 0.6, 1.0}) EXPECT_GT(l2_distance(obj, th(t)), 0.0) << t;
}

TEST(L2Distance, MatchesDirectRecomputation) {
    const auto obj = fitted_objective(4);
    const Eigen::VectorXd t = th(0.42);
    const Eigen::VectorXd gap = obj.eta(obj.nodes) - obj.p(obj.nodes, t);
    EXPECT_NEAR(l2_distance(obj, t), std::sqrt(gap.squaredNorm() / static_cast<double>(obj.size())), 1e-10);
    EXPECT_THROW(l2_distance(obj, th(1.5)), InputError);
    EXPECT_THROW(l2_distance(obj, Eigen::VectorXd::Zero(2)), InputError);
}

TEST(Calibrate, RecoversTheMinimizerOfAConvexFamily) {
    const auto obj = L2Objective::build(eta41(), shifted(th(0.4)), 1, 1, 2000, QuadRule::Sobol, 3);
    const auto r = calibrate(obj, Box::unit(1), {});
    EXPECT_NEAR(r.theta_hat(0), 0.4, 1e-4);
    EXPECT_FALSE(r.flat_flag);
    EXPECT_FALSE(r.on_boundary);
    EXPECT_EQ(r.starts.size(), 10u);
}

TEST(Calibrate, TwoDimensionalAndBoundaryMinimizers) {
    const auto obj = L2Objective::build(eta41(), shifted(Eigen::Vector2d(0.2, 0.9)), 1, 2, 1000, QuadRule::Sobol, 3);
    const auto r = calibrate(obj, Box::unit(2, "t"), {});
    EXPECT_NEAR(r.theta_hat(0), 0.2, 1e-4);
    EXPECT_NEAR(r.theta_hat(1), 0.9, 1e-4);

    const auto edge = L2Objective::build(eta41(), shifted(th(1.3)), 1, 1, 1000, QuadRule::Sobol, 3);
    const auto re = calibrate(edge, Box::unit(1), {});
    EXPECT_NEAR(re.theta_hat(0), 1.0, 1e-9);
    EXPECT_TRUE(re.on_boundary);
    EXPECT_FALSE(re.warnings.empty());
}

TEST(Calibrate, OracleGridSearchFindsThetaStar) {
    const auto obj = BenchScenario::make(Study::Study41, 50, 400, 1, 1).oracle_objective(10000, 3);
    double best = 1e300, arg = -1.0;
    for (int k = 0; k <= 200; ++k) {
        const double v = l2_distance(obj, th(0.005 * k));
        if (v < best) best = v, arg = 0.005 * k;
    }
    EXPECT_NEAR(arg, 0.3, 0.005);
    CalibrateOptions o;
    o.seed = 9;
    EXPECT_NEAR(calibrate(obj, Box::unit(1), o).theta_hat(0), 0.3, 1e-4);
}

TEST(Calibrate, AgreesWithAFineGridOnFittedObjectives) {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        const auto obj = fitted_objective(seed);
        CalibrateOptions o;
        o.seed = seed;
        const auto r = calibrate(obj, Box::unit(1), o);
        if (r.flat_flag) continue;
        double best = 1e300, arg = -1.0;
        for (int k = 0; k <= 500; ++k) {
            const double v = obj.squared(th(0.002 * k));
            if (v < best) best = v, arg = 0.002 * k;
        }
        EXPECT_LE(std::abs(r.theta_hat(0) - arg), 0.004) << "seed " << seed;
        EXPECT_LE(r.objective, best + 1e-12);
    }
}

TEST(Calibrate, DeterministicAndThreadIndependent) {
    const auto obj = fitted_objective(6);
    CalibrateOptions o;
    o.seed = 5;
    const auto a = calibrate(obj, Box::unit(1), o);
    const auto b = calibrate(obj, Box::unit(1), o);
    o.threads = 3;
    const auto c = calibrate(obj, Box::unit(1), o);
    EXPECT_EQ(a.theta_hat, b.theta_hat);
    EXPECT_EQ(a.theta_hat, c.theta_hat);
    EXPECT_EQ(a.l2_distance, c.l2_distance);
    EXPECT_EQ(obj.squared(th(0.37)), obj.squared(th(0.37)));
}

TEST(Calibrate, PhysicalBoxIsAnAffineRelabelling) {
    const auto obj = L2Objective::build(eta41(), shifted(th(0.65)), 1, 1, 1000, QuadRule::Sobol, 3);
    const Box phys({{"k", -2.0, 6.0, false, "1/s"}});
    const auto u = calibrate(obj, Box::unit(1), {});
    const auto p = calibrate(obj, phys, {});
    EXPECT_NEAR(p.theta_hat(0), -2.0 + 8.0 * u.theta_hat(0), 1e-12);
    EXPECT_EQ(p.theta_unit, u.theta_unit);
}

TEST(Calibrate, FlatObjectiveIsFlagged) {
    const auto obj = L2Objective::build(eta41(), shifted(th(0.0)), 1, 1, 500, QuadRule::Sobol, 3);
    auto flat = obj;
    flat.p_nodes = [&obj](const Eigen::VectorXd&) { return Eigen::VectorXd(obj.eta_nodes.array() + 0.1); };
    const auto r = calibrate(flat, Box::unit(1), {});
    EXPECT_TRUE(r.flat_flag);
}

TEST(Calibrate, RejectsBadOptions) {
    const auto obj = L2Objective::build(eta41(), shifted(th(0.4)), 1, 1, 500, QuadRule::Sobol, 3);
    CalibrateOptions o;
    o.n_starts = 0;
    EXPECT_THROW(calibrate(obj, Box::unit(1), o), InputError);
    EXPECT_THROW(calibrate(obj, Box::unit(2), {}), InputError);
}

TEST(CalibrateNaive, ThetaBlindClassifierReturnsFirstGridPoint) {
    const auto sc = BenchScenario::make(Study::Study41, 60, 400, 1, 1);
    const PhysicalDataset phys = generate_physical(sc, 3);
    const auto r = calibrate_naive(
        phys, [](const Eigen::MatrixXd& x, const Eigen::VectorXd&) { return Eigen::VectorXd(x.col(0).array().round()); },
        Box::unit(1), 101);
    EXPECT_EQ(r.theta_hat(0), 0.0);
    EXPECT_TRUE(r.flat_flag);
}

TEST(CalibrateNaive, TrueThresholdClassifierLandsNearThetaStar) {
    const auto sc = BenchScenario::make(Study::Study41, 200, 400, 1, 1);
    const PhysicalDataset phys = generate_physical(sc, 8);
    const auto r = calibrate_naive(
        phys,
        [&sc](const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
            return Eigen::VectorXd((sc.p(x, t).array() > 0.5).cast<double>());
        },
        Box::unit(1), 201);
    EXPECT_NEAR(r.theta_hat(0), 0.3, 0.1);
}

TEST(KnnClassifier, MajorityVoteWithDeterministicTies) {
    ComputerDataset d{Eigen::MatrixXd(4, 1), Eigen::MatrixXd(4, 1), Eigen::VectorXd(4), Box::unit(1), Box::unit(1)};
    d.x << 0.0, 0.1, 0.9, 1.0;
    d.theta << 0.5, 0.5, 0.5, 0.5;
    d.y << 0, 0, 1, 1;
    const KnnClassifier knn(d, 3);
    const Eigen::VectorXd p = knn.predict_unit(Eigen::MatrixXd(Eigen::Vector2d(0.02, 0.97)), th(0.5));
    EXPECT_EQ(p(0), 0.0);
    EXPECT_EQ(p(1), 1.0);
    EXPECT_THROW(KnnClassifier(d, 0), InputError);
}
