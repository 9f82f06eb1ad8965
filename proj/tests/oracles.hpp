// Independent reference computations shared by the unit tests and the acceptance run.
#ifndef L2CAL_TESTS_ORACLES_HPP
#define L2CAL_TESTS_ORACLES_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double rbf(double phi, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return std::exp(-phi * (a - b).squaredNorm());
}

/// Posterior predictive P(y* = 1 | data) for a zero-mean unit-variance RBF GP
/// with logistic likelihood, by self-normalized Monte Carlo over the prior.
inline double gpc_predictive(const Eigen::MatrixXd& train, const Eigen::VectorXd& y, double phi,
                             const Eigen::VectorXd& query, int draws, std::uint64_t seed) {
    const Eigen::Index n = train.rows();
    Eigen::MatrixXd all(n + 1, train.cols());
    all.topRows(n) = train;
    all.row(n) = query.transpose();
    Eigen::MatrixXd K(n + 1, n + 1);
    for (Eigen::Index i = 0; i <= n; ++i)
        for (Eigen::Index j = 0; j <= n; ++j) K(i, j) = rbf(phi, all.row(i).transpose(), all.row(j).transpose());
    K.diagonal().array() += 1e-9;
    const Eigen::MatrixXd L = K.llt().matrixL();
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    double num = 0.0, den = 0.0;
    Eigen::VectorXd e(n + 1);
    for (int d = 0; d < draws; ++d) {
        for (Eigen::Index i = 0; i <= n; ++i) e(i) = z(gen);
        const Eigen::VectorXd f = L * e;
        double lik = 1.0;
        for (Eigen::Index i = 0; i < n; ++i) lik *= y(i) == 1.0 ? logistic(f(i)) : 1.0 - logistic(f(i));
        num += lik * logistic(f(n));
        den += lik;
    }
    return num / den;
}

/// First-order indices of the Ishigami function on [-pi, pi]^3.
inline Eigen::Vector3d ishigami_indices(double a = 7.0, double b = 0.1) {
    const double pi = std::numbers::pi;
    const double p4 = std::pow(pi, 4), p8 = p4 * p4;
    const double v1 = 0.5 * std::pow(1.0 + b * p4 / 5.0, 2);
    const double v2 = a * a / 8.0;
    const double v13 = b * b * p8 * (1.0 / 18.0 - 1.0 / 50.0);
    const double var = v1 + v2 + v13;
    return {v1 / var, v2 / var, 0.0};
}

inline double ishigami(double x1, double x2, double x3, double a = 7.0, double b = 0.1) {
    return std::sin(x1) + a * std::sin(x2) * std::sin(x2) + b * std::pow(x3, 4) * std::sin(x1);
}

/// Composite Simpson rule on [lo, hi] with an even number of panels.
template <class F>
double simpson(F&& f, double lo, double hi, int panels = 2000) {
    const double h = (hi - lo) / panels;
    double s = f(lo) + f(hi);
    for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
    return s * h / 3.0;
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace oracle

#endif
