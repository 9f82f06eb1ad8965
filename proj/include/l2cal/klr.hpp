#ifndef L2CAL_KLR_HPP
#define L2CAL_KLR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/LU>

#include "l2cal/box.hpp"
#include "l2cal/error.hpp"
#include "l2cal/kernels.hpp"
#include "l2cal/sampling.hpp"

namespace l2cal {

/// Binary physical observations y_i at control inputs x_i (physical units).
struct PhysicalDataset {
    Eigen::MatrixXd x;  ///< n x d
    Eigen::VectorXd y;  ///< n labels in {0, 1}
    Box domain;         ///< Omega

    Eigen::Index size() const { return x.rows(); }
    int dim() const { return static_cast<int>(x.cols()); }

    void validate() const {
        if (x.cols() != domain.dim()) throw InputError("physical data: x has " + std::to_string(x.cols()) +
                                                      " columns but the domain has " + std::to_string(domain.dim()));
        if (x.rows() != y.size()) throw InputError("physical data: x and y row counts differ");
        if (x.rows() < x.cols() + 1) throw InputError("physical data: need n >= d + 1 observations");
        int ones = 0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (y(i) != 0.0 && y(i) != 1.0) throw InputError("physical data: label in row " + std::to_string(i) + " is not 0/1");
            ones += static_cast<int>(y(i));
        }
        if (ones == 0 || ones == y.size()) throw InputError("physical data: labels must contain both 0 and 1");
        const auto bad = domain.offending_rows(x);
        if (!bad.empty()) throw InputError("physical data: rows outside the domain: " + format_rows(bad));
    }
};

struct KlrOptions {
    int max_iterations = 100;
    int max_halvings = 30;
    double gradient_tol = 1e-8;
};

struct KlrTrainLog {
    int iterations = 0;
    double objective = 0.0;
    double gradient_norm = 0.0;
    bool converged = false;
    std::vector<double> objective_trace;  ///< objective after the start and each accepted step
};

/// Fitted true-process estimate xi(x) = b + sum_i a_i Phi(c_i, x), eta = logistic(xi).
struct KlrModel {
    KernelSpec spec;
    Box domain;
    Eigen::MatrixXd centers;  ///< training inputs in unit coordinates
    Eigen::VectorXd a;
    double b = 0.0;
    double lambda = 0.0;
    Eigen::VectorXd fitted_latent;  ///< solver's xi at the training inputs
    KlrTrainLog log;
    std::vector<std::string> warnings;

    Eigen::VectorXd latent_unit(const Eigen::MatrixXd& unit_pts) const {
        if (unit_pts.cols() != centers.cols()) throw InputError("KLR prediction: dimension mismatch");
        return (cross_gram(spec, unit_pts, centers) * a).array() + b;
    }

    Eigen::VectorXd eta_unit(const Eigen::MatrixXd& unit_pts) const {
        return latent_unit(unit_pts).unaryExpr([](double z) { return sigmoid(z); });
    }
};

/// Penalized objective (1/n) sum_i [y_i xi_i - log(1 + e^xi_i)] - lambda a' K a, with xi = b + K a.
inline double klr_objective(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, double lambda,
                            const Eigen::VectorXd& a, double b, Eigen::VectorXd* latent = nullptr) {
    const Eigen::VectorXd Ka = K * a;
    const Eigen::VectorXd xi = Ka.array() + b;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) ll += y(i) * xi(i) - log1pexp(xi(i));
    if (latent) *latent = xi;
    return ll / static_cast<double>(y.size()) - lambda * a.dot(Ka);
}

/// Gradient of klr_objective with respect to (a, b); the last entry is d/db.
inline Eigen::VectorXd klr_gradient(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, double lambda,
                                    const Eigen::VectorXd& a, double b) {
    const Eigen::Index n = y.size();
    const Eigen::VectorXd xi = (K * a).array() + b;
    Eigen::VectorXd resid(n);
    for (Eigen::Index i = 0; i < n; ++i) resid(i) = y(i) - sigmoid(xi(i));
    Eigen::VectorXd g(n + 1);
    g.head(n) = K * (resid / static_cast<double>(n) - 2.0 * lambda * a);
    g(n) = resid.sum() / static_cast<double>(n);
    return g;
}

namespace detail {

struct KlrSolution {
    Eigen::VectorXd a;
    double b = 0.0;
    Eigen::VectorXd latent;
    KlrTrainLog log;
};

/// Newton/IRLS on (a, b) with step halving. The a-block of the Newton system
/// K[(1/n)(W K da + W 1 db) + 2 lambda da] = K[(1/n)(y - pi) - 2 lambda a]
/// is solved with the leading K dropped, which stays solvable when K is
/// numerically singular.
inline KlrSolution solve_klr(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, double lambda,
                             const KlrOptions& opt, const Eigen::VectorXd* a0 = nullptr,
                             const double* b0 = nullptr) {
    const Eigen::Index n = y.size();
    const double dn = static_cast<double>(n);
    KlrSolution s;
    s.a = a0 ? *a0 : Eigen::VectorXd::Zero(n);
    s.b = b0 ? *b0 : logit(std::clamp(y.mean(), 1e-6, 1.0 - 1e-6));
    double J = klr_objective(K, y, lambda, s.a, s.b, &s.latent);
    s.log.objective_trace.push_back(J);

    Eigen::MatrixXd M(n + 1, n + 1);
    Eigen::VectorXd rhs(n + 1), w(n), resid(n);
    double gnorm = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it <= opt.max_iterations; ++it) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = sigmoid(s.latent(i));
            w(i) = p * (1.0 - p);
            resid(i) = y(i) - p;
        }
        const Eigen::VectorXd reduced = resid / dn - 2.0 * lambda * s.a;
        gnorm = std::max((K * reduced).cwiseAbs().maxCoeff(), std::abs(resid.sum() / dn));
        if (gnorm <= opt.gradient_tol || it == opt.max_iterations) break;

        M.topLeftCorner(n, n) = w.asDiagonal() * K;
        M.topLeftCorner(n, n).diagonal().array() += 2.0 * dn * lambda;
        M.topRightCorner(n, 1) = w;
        M.bottomLeftCorner(1, n) = w.transpose() * K;
        M(n, n) = w.sum();
        rhs.head(n) = resid - 2.0 * dn * lambda * s.a;
        rhs(n) = resid.sum();
        const Eigen::VectorXd delta = M.partialPivLu().solve(rhs);
        if (!delta.allFinite()) break;

        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd a_new, latent_new;
        for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
            a_new = s.a + t * delta.head(n);
            const double b_new = s.b + t * delta(n);
            const double J_new = klr_objective(K, y, lambda, a_new, b_new, &latent_new);
            if (std::isfinite(J_new) && J_new >= J) {
                s.a = std::move(a_new);
                s.b = b_new;
                s.latent = std::move(latent_new);
                J = J_new;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        s.log.objective_trace.push_back(J);
    }
    s.log.iterations = it;
    s.log.objective = J;
    s.log.gradient_norm = gnorm;
    s.log.converged = gnorm <= opt.gradient_tol;
    return s;
}

}  // namespace detail

/// Fits the penalized kernel logistic regression. The intercept is not penalized.
inline KlrModel fit_klr(const PhysicalDataset& data, const KernelSpec& spec, double lambda,
                        const KlrOptions& opt = {}) {
    data.validate();
    spec.validate();
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InputError("fit_klr: lambda must be positive");
    KlrModel m;
    m.spec = spec;
    m.domain = data.domain;
    m.centers = data.domain.to_unit(data.x);
    m.lambda = lambda;
    const Eigen::MatrixXd K = gram(spec, m.centers).entries;
    auto sol = detail::solve_klr(K, data.y, lambda, opt);
    m.a = std::move(sol.a);
    m.b = sol.b;
    m.fitted_latent = std::move(sol.latent);
    m.log = std::move(sol.log);
    if (!m.log.converged) {
        m.warnings.push_back("KLR did not reach gradient tolerance (|grad| = " + std::to_string(m.log.gradient_norm) + ")");
    }
    return m;
}

/// eta(x) = logistic(xi(x)) at physical-unit inputs. Points outside Omega are
/// evaluated anyway and reported through `extrapolated`.
inline Eigen::VectorXd predict_eta(const KlrModel& model, const Eigen::MatrixXd& xs, bool* extrapolated = nullptr) {
    if (xs.cols() != model.domain.dim()) throw InputError("predict_eta: dimension mismatch");
    if (extrapolated) *extrapolated = !model.domain.offending_rows(xs).empty();
    return model.eta_unit(model.domain.to_unit(xs));
}

inline std::vector<double> default_rho_grid() { return {0.25, 0.5, 1.0, 2.0}; }

/// Penalty order suggested by the rate heuristic: n^(-2m/(2m+d)), m = nu + d/2.
inline double rate_lambda(Eigen::Index n, int d, double nu) {
    const double m = nu + d / 2.0;
    return std::pow(static_cast<double>(n), -2.0 * m / (2.0 * m + d));
}

/// Seven log-spaced values centred on rate_lambda, `decades_per_step` apart.
inline std::vector<double> default_lambda_grid(Eigen::Index n, int d, double nu, double decades_per_step = 1.0) {
    const double c = rate_lambda(n, d, nu);
    std::vector<double> g;
    for (int k = -3; k <= 3; ++k) g.push_back(c * std::pow(10.0, k * decades_per_step));
    return g;
}

struct KlrTuning {
    KernelSpec spec;
    double lambda = 0.0;
    std::vector<double> rho_grid;
    std::vector<double> lambda_grid;
    Eigen::MatrixXd cv_loss;  ///< rho x lambda mean held-out log-loss
    std::vector<std::string> warnings;
};

/// Grid search over (rho, lambda) by stratified k-fold held-out log-loss.
/// Ties go to the smallest lambda, then the smallest rho.
inline KlrTuning cv_tune_klr(const PhysicalDataset& data, const std::vector<double>& rho_grid,
                             const std::vector<double>& lambda_grid, int folds, std::uint64_t seed,
                             double nu = 2.5, const KlrOptions& opt = {}) {
    data.validate();
    if (rho_grid.empty() || lambda_grid.empty()) throw InputError("cv_tune_klr: empty grid");
    if (folds < 2) throw InputError("cv_tune_klr: folds must be >= 2");
    for (double l : lambda_grid)
        if (!(l > 0.0)) throw InputError("cv_tune_klr: lambda grid must be positive");

    KlrTuning out;
    out.rho_grid = rho_grid;
    out.lambda_grid = lambda_grid;
    const Eigen::MatrixXd Z = data.domain.to_unit(data.x);
    const auto assign = stratified_folds(data.y, folds, seed);

    // Penalties visited from largest to smallest so each fit warm-starts from a smoother one.
    std::vector<std::size_t> order(lambda_grid.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto i, auto j) { return lambda_grid[i] > lambda_grid[j]; });

    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rho_grid.size()),
                                                  static_cast<Eigen::Index>(lambda_grid.size()));
    int used = 0;
    for (int f = 0; f < folds; ++f) {
        const auto train = fold_members(assign, f, false);
        const auto test = fold_members(assign, f, true);
        const Eigen::VectorXd ytr = take(data.y, train), yte = take(data.y, test);
        if (test.empty() || ytr.sum() == 0.0 || ytr.sum() == static_cast<double>(ytr.size())) {
            out.warnings.push_back("fold " + std::to_string(f) + " skipped: single-class training split");
            continue;
        }
        ++used;
        const Eigen::MatrixXd Ztr = take_rows(Z, train), Zte = take_rows(Z, test);
        for (std::size_t r = 0; r < rho_grid.size(); ++r) {
            const auto spec = KernelSpec::matern(nu, rho_grid[r]);
            const Eigen::MatrixXd K = gram(spec, Ztr).entries;
            const Eigen::MatrixXd Kte = cross_gram(spec, Zte, Ztr);
            Eigen::VectorXd a_prev;
            double b_prev = 0.0;
            bool warm = false;
            for (auto l : order) {
                auto sol = warm ? detail::solve_klr(K, ytr, lambda_grid[l], opt, &a_prev, &b_prev)
                                : detail::solve_klr(K, ytr, lambda_grid[l], opt);
                const Eigen::VectorXd p = ((Kte * sol.a).array() + sol.b).unaryExpr([](double z) { return sigmoid(z); });
                total(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l)) += log_loss(yte, p);
                a_prev = std::move(sol.a);
                b_prev = sol.b;
                warm = true;
            }
        }
    }
    if (used == 0) throw InputError("cv_tune_klr: every fold was degenerate");
    out.cv_loss = total / static_cast<double>(used);

    Eigen::Index best_r = 0, best_l = 0;
    bool have = false;
    for (Eigen::Index r = 0; r < out.cv_loss.rows(); ++r) {
        for (Eigen::Index l = 0; l < out.cv_loss.cols(); ++l) {
            const double v = out.cv_loss(r, l);
            if (!std::isfinite(v)) continue;
            if (!have) {
                best_r = r, best_l = l, have = true;
                continue;
            }
            const double bv = out.cv_loss(best_r, best_l);
            const auto key = std::make_tuple(v, lambda_grid[static_cast<std::size_t>(l)], rho_grid[static_cast<std::size_t>(r)]);
            const auto best = std::make_tuple(bv, lambda_grid[static_cast<std::size_t>(best_l)], rho_grid[static_cast<std::size_t>(best_r)]);
            if (key < best) best_r = r, best_l = l;
        }
    }
    if (!have) throw NumericalError("cv_tune_klr: no finite cross-validation loss");
    out.spec = KernelSpec::matern(nu, rho_grid[static_cast<std::size_t>(best_r)]);
    out.lambda = lambda_grid[static_cast<std::size_t>(best_l)];
    return out;
}

}  // namespace l2cal

#endif
