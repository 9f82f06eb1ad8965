#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "l2cal/bench.hpp"
#include "l2cal/klr.hpp"
#include "oracles.hpp"

using namespace l2cal;

namespace {

PhysicalDataset study41_data(long n, std::uint64_t seed) {
    return generate_physical(BenchScenario::make(Study::Study41, n, 400, 1, 1), seed);
}

struct RandomInstance {
    Eigen::MatrixXd K;
    Eigen::VectorXd y, a;
    double b, lambda;
};

RandomInstance random_instance(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const int n = 4 + static_cast<int>(gen() % 12);
    const int d = 1 + static_cast<int>(gen() % 3);
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = U(gen);
    RandomInstance r;
    r.K = gram(KernelSpec::matern(2.5, 0.2 + 2.0 * U(gen)), x).entries;
    r.y.resize(n);
    r.a.resize(n);
    for (int i = 0; i < n; ++i) {
        r.y(i) = U(gen) < 0.5 ? 0.0 : 1.0;
        r.a(i) = 2.0 * U(gen) - 1.0;
    }
    r.b = 2.0 * U(gen) - 1.0;
    r.lambda = std::pow(10.0, -5.0 + 5.0 * U(gen));
    return r;
}

}  // namespace

TEST(KlrObjective, GradientMatchesCentralDifferences) {
    std::mt19937_64 gen(11);
    for (int inst = 0; inst < 30; ++inst) {
        const auto r = random_instance(gen);
        const Eigen::Index n = r.y.size();
        const Eigen::VectorXd g = klr_gradient(r.K, r.y, r.lambda, r.a, r.b);
        Eigen::VectorXd fd(n + 1);
        const double h = 1e-6;
        for (Eigen::Index j = 0; j <= n; ++j) {
            Eigen::VectorXd ap = r.a, am = r.a;
            double bp = r.b, bm = r.b;
            if (j < n) ap(j) += h, am(j) -= h;
            else bp += h, bm -= h;
            fd(j) = (klr_objective(r.K, r.y, r.lambda, ap, bp) - klr_objective(r.K, r.y, r.lambda, am, bm)) / (2.0 * h);
        }
        EXPECT_LE((g - fd).norm() / g.norm(), 1e-5) << "instance " << inst;
    }
}

TEST(KlrObjective, PenaltyIsSubtracted) {
    const Eigen::MatrixXd K = Eigen::MatrixXd::Identity(2, 2);
    const Eigen::VectorXd y = Eigen::Vector2d(0, 1);
    const Eigen::VectorXd a = Eigen::Vector2d(1, 1);
    const double ll = 0.5 * ((0.0 - std::log1p(std::exp(1.0))) + (1.0 - std::log1p(std::exp(1.0))));
    EXPECT_NEAR(klr_objective(K, y, 0.3, a, 0.0), ll - 0.3 * 2.0, 1e-14);
}

TEST(KlrFit, ObjectiveNeverDecreasesAcrossAcceptedSteps) {
    std::mt19937_64 gen(5);
    for (int inst = 0; inst < 20; ++inst) {
        std::uniform_real_distribution<double> U(0.0, 1.0);
        const int n = 8 + inst;
        PhysicalDataset d{Eigen::MatrixXd(n, 1), Eigen::VectorXd(n), Box::unit(1)};
        for (int i = 0; i < n; ++i) d.x(i, 0) = U(gen), d.y(i) = i % 3 == 0 ? 1.0 : 0.0;
        const KlrModel m = fit_klr(d, KernelSpec::matern(2.5, 0.3 + U(gen)), std::pow(10.0, -6.0 + 4.0 * U(gen)));
        ASSERT_GE(m.log.objective_trace.size(), 2u);
        for (std::size_t k = 1; k < m.log.objective_trace.size(); ++k)
            EXPECT_GE(m.log.objective_trace[k], m.log.objective_trace[k - 1]);
        EXPECT_TRUE(m.log.converged);
        EXPECT_LE(m.log.gradient_norm, 1e-8);
    }
}

TEST(KlrFit, HeavyPenaltyCollapsesToIntercept) {
    PhysicalDataset d{Eigen::MatrixXd(8, 1), Eigen::VectorXd(8), Box::unit(1)};
    d.x << 0.0, 0.1, 0.3, 0.45, 0.55, 0.7, 0.9, 1.0;
    d.y << 1, 0, 0, 1, 1, 0, 0, 1;
    const KlrModel m = fit_klr(d, KernelSpec::matern(2.5, 1.0), 1e6);
    EXPECT_LT(m.a.cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_NEAR(sigmoid(m.b), 0.5, 1e-4);

    const PhysicalDataset s = study41_data(50, 3);
    const KlrModel ms = fit_klr(s, KernelSpec::matern(2.5, 0.5), 1e6);
    EXPECT_NEAR(sigmoid(ms.b), s.y.mean(), 1e-4);
}

TEST(KlrFit, NearInterpolationWithTinyPenalty) {
    PhysicalDataset d{Eigen::MatrixXd(5, 1), Eigen::VectorXd(5), Box::unit(1)};
    d.x << 0.0, 0.25, 0.5, 0.75, 1.0;
    d.y << 0, 1, 0, 1, 0;
    const KlrModel m = fit_klr(d, KernelSpec::matern(2.5, 0.25), 1e-8);
    EXPECT_LT(log_loss(d.y, m.eta_unit(m.centers)), 0.05);
}

TEST(KlrFit, RepresenterReproducesFittedValues) {
    const PhysicalDataset d = study41_data(60, 9);
    const KlrModel m = fit_klr(d, KernelSpec::matern(2.5, 0.5), 1e-3);
    EXPECT_LE((m.latent_unit(m.centers) - m.fitted_latent).cwiseAbs().maxCoeff(), 1e-8);
    const Eigen::VectorXd eta = predict_eta(m, Eigen::VectorXd::LinSpaced(101, 0.0, 1.0));
    EXPECT_TRUE((eta.array() > 0.0).all() && (eta.array() < 1.0).all());
}

TEST(KlrFit, ConstantModelsPredictTheirIntercept) {
    KlrModel m;
    m.spec = KernelSpec::matern(2.5, 1.0);
    m.domain = Box::unit(1);
    m.centers = Eigen::MatrixXd::Constant(3, 1, 0.5);
    m.a = Eigen::VectorXd::Zero(3);
    const Eigen::MatrixXd xs = Eigen::VectorXd::LinSpaced(7, 0.0, 1.0);
    EXPECT_TRUE(predict_eta(m, xs).isApprox(Eigen::VectorXd::Constant(7, 0.5)));
    m.b = logit(0.25);
    EXPECT_LT((predict_eta(m, xs).array() - 0.25).abs().maxCoeff(), 1e-15);
    bool extrapolated = false;
    predict_eta(m, Eigen::MatrixXd::Constant(1, 1, 1.5), &extrapolated);
    EXPECT_TRUE(extrapolated);
    EXPECT_THROW(predict_eta(m, Eigen::MatrixXd::Zero(1, 2)), InputError);
}

TEST(KlrFit, RejectsDegenerateInput) {
    PhysicalDataset d{Eigen::MatrixXd::Zero(4, 1), Eigen::VectorXd::Ones(4), Box::unit(1)};
    EXPECT_THROW(fit_klr(d, KernelSpec::matern(2.5, 1.0), 1e-2), InputError);
    d.y(0) = 0.0;
    EXPECT_THROW(fit_klr(d, KernelSpec::matern(2.5, 1.0), 0.0), InputError);
    d.x(1, 0) = 2.0;
    EXPECT_THROW(fit_klr(d, KernelSpec::matern(2.5, 1.0), 1e-2), InputError);
    d.x(1, 0) = 0.5;
    d.y(2) = 0.5;
    EXPECT_THROW(fit_klr(d, KernelSpec::matern(2.5, 1.0), 1e-2), InputError);
}

TEST(KlrFit, CrossValidatedFitRecoversTheTruth) {
    const auto sc = BenchScenario::make(Study::Study41, 200, 400, 1, 1);
    const Eigen::MatrixXd q = sobol_points(10000, 1, 5);
    const Eigen::VectorXd eta = sc.eta(q);
    const PhysicalDataset d = generate_physical(sc, 21);
    const KlrTuning t = cv_tune_klr(d, default_rho_grid(), default_lambda_grid(200, 1, 2.5), 10, 4);
    const KlrModel m = fit_klr(d, t.spec, t.lambda);
    const double err = (m.eta_unit(q) - eta).norm() / 100.0;
    const double intercept_err = (eta.array() - d.y.mean()).matrix().norm() / 100.0;
    EXPECT_LT(err, intercept_err);
    EXPECT_NEAR(predict_eta(m, Eigen::MatrixXd::Zero(1, 1))(0), std::exp(1.0) / 3.0, 0.15);
}

TEST(KlrCv, SingleElementGridsAreReturned) {
    const PhysicalDataset d = study41_data(50, 2);
    const KlrTuning t = cv_tune_klr(d, {0.7}, {3e-3}, 5, 1);
    EXPECT_EQ(t.spec.rho, 0.7);
    EXPECT_EQ(t.lambda, 3e-3);
}

TEST(KlrCv, HeavyPenaltyLosesOnSmoothData) {
    // A steep logistic signal, well sampled: the near-interpolating fit should
    // beat the intercept-only fit on fresh data, and CV should agree.
    auto draw = [](long n, bool grid, std::uint64_t seed) {
        std::mt19937_64 gen(seed);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        PhysicalDataset d;
        d.domain = Box::unit(1);
        d.x.resize(n, 1);
        d.y.resize(n);
        for (long i = 0; i < n; ++i) {
            d.x(i, 0) = grid ? static_cast<double>(i) / static_cast<double>(n - 1) : U(gen);
            d.y(i) = U(gen) < oracle::logistic(12.0 * (d.x(i, 0) - 0.5)) ? 1.0 : 0.0;
        }
        return d;
    };
    const PhysicalDataset d = draw(200, true, 6), fresh = draw(20000, false, 7);
    const double loose = log_loss(fresh.y, fit_klr(d, KernelSpec::matern(2.5, 0.5), 1e-8).eta_unit(fresh.x));
    const double heavy = log_loss(fresh.y, fit_klr(d, KernelSpec::matern(2.5, 0.5), 1e6).eta_unit(fresh.x));
    ASSERT_LT(loose, heavy);
    EXPECT_EQ(cv_tune_klr(d, {0.5}, {1e-8, 1e6}, 10, 1).lambda, 1e-8);
}

TEST(KlrCv, DeterministicGivenSeed) {
    const PhysicalDataset d = study41_data(60, 8);
    const auto grid = default_lambda_grid(60, 1, 2.5);
    const KlrTuning a = cv_tune_klr(d, default_rho_grid(), grid, 10, 17);
    const KlrTuning b = cv_tune_klr(d, default_rho_grid(), grid, 10, 17);
    EXPECT_EQ(a.spec, b.spec);
    EXPECT_EQ(a.lambda, b.lambda);
    EXPECT_EQ(a.cv_loss, b.cv_loss);
}

TEST(KlrCv, GridOrderDoesNotChangeTheSelection) {
    const PhysicalDataset d = study41_data(60, 8);
    auto grid = default_lambda_grid(60, 1, 2.5);
    auto rho = default_rho_grid();
    const KlrTuning a = cv_tune_klr(d, rho, grid, 10, 17);
    std::reverse(grid.begin(), grid.end());
    std::reverse(rho.begin(), rho.end());
    const KlrTuning b = cv_tune_klr(d, rho, grid, 10, 17);
    EXPECT_EQ(a.spec.rho, b.spec.rho);
    EXPECT_EQ(a.lambda, b.lambda);
}

TEST(KlrCv, RateCentredGridSelectsAnInteriorValue) {
    // Extending the default grid by two decades either side must not move the
    // choice: the optimum lies inside the default range.
    const PhysicalDataset d = study41_data(100, 31);
    const auto grid = default_lambda_grid(100, 1, 2.5);
    std::vector<double> wide{grid.front() * 1e-2, grid.front() * 1e-1};
    wide.insert(wide.end(), grid.begin(), grid.end());
    wide.push_back(grid.back() * 10.0);
    wide.push_back(grid.back() * 100.0);
    const KlrTuning t = cv_tune_klr(d, {1.0}, grid, 10, 2);
    const KlrTuning w = cv_tune_klr(d, {1.0}, wide, 10, 2);
    EXPECT_GT(t.lambda, grid.front());
    EXPECT_LT(t.lambda, grid.back());
    EXPECT_EQ(t.lambda, w.lambda);
}

TEST(KlrCv, RateHeuristic) {
    // m = nu + d/2 = 3, exponent 2m / (2m + d) = 6/7
    EXPECT_NEAR(rate_lambda(100, 1, 2.5), std::pow(100.0, -6.0 / 7.0), 1e-15);
    const auto g = default_lambda_grid(100, 1, 2.5);
    ASSERT_EQ(g.size(), 7u);
    EXPECT_NEAR(g[3], rate_lambda(100, 1, 2.5), 1e-15);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], 10.0, 1e-9);
}

TEST(KlrCv, RejectsBadArguments) {
    const PhysicalDataset d = study41_data(50, 2);
    EXPECT_THROW(cv_tune_klr(d, {}, {1e-3}, 10, 1), InputError);
    EXPECT_THROW(cv_tune_klr(d, {1.0}, {1e-3}, 1, 1), InputError);
    EXPECT_THROW(cv_tune_klr(d, {1.0}, {-1.0}, 10, 1), InputError);
}
