#ifndef L2CAL_GPC_HPP
#define L2CAL_GPC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "l2cal/box.hpp"
#include "l2cal/error.hpp"
#include "l2cal/kernels.hpp"
#include "l2cal/sampling.hpp"

namespace l2cal {

/// Binary simulation outputs at design points (x_i, theta_i), physical units.
struct ComputerDataset {
    Eigen::MatrixXd x;      ///< N x d
    Eigen::MatrixXd theta;  ///< N x q
    Eigen::VectorXd y;      ///< N labels in {0, 1}
    Box domain_x;
    Box domain_theta;

    Eigen::Index size() const { return y.size(); }

    void validate() const {
        if (x.cols() != domain_x.dim() || theta.cols() != domain_theta.dim())
            throw InputError("computer data: column counts do not match the domains");
        if (x.rows() != y.size() || theta.rows() != y.size())
            throw InputError("computer data: x, theta and y row counts differ");
        int ones = 0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (y(i) != 0.0 && y(i) != 1.0) throw InputError("computer data: label in row " + std::to_string(i) + " is not 0/1");
            ones += static_cast<int>(y(i));
        }
        if (ones == 0 || ones == y.size()) throw InputError("computer data: labels must contain both 0 and 1");
        auto bad = domain_x.offending_rows(x);
        const auto bad_t = domain_theta.offending_rows(theta);
        bad.insert(bad.end(), bad_t.begin(), bad_t.end());
        std::sort(bad.begin(), bad.end());
        bad.erase(std::unique(bad.begin(), bad.end()), bad.end());
        if (!bad.empty()) throw InputError("computer data: rows outside the domain: " + format_rows(bad));
    }

    /// Joint (x, theta) rows mapped to the unit box.
    Eigen::MatrixXd joint_unit() const {
        Eigen::MatrixXd z(y.size(), x.cols() + theta.cols());
        z.leftCols(x.cols()) = domain_x.to_unit(x);
        z.rightCols(theta.cols()) = domain_theta.to_unit(theta);
        return z;
    }
};

struct GpcOptions {
    int max_iterations = 100;
    int max_halvings = 30;
    double residual_tol = 1e-6;
};

struct GpcTrainLog {
    int iterations = 0;
    double objective = 0.0;
    double residual = 0.0;
    bool converged = false;
    std::vector<double> objective_trace;
};

/// Laplace-approximated GP classifier with logistic likelihood and a zero-mean,
/// unit-variance latent prior.
class GpcModel {
public:
    GpcModel() = default;

    /// Rebuilds the prediction factors from a stored posterior mode.
    GpcModel(KernelSpec spec, Box domain_x, Box domain_theta, Eigen::MatrixXd train_points, Eigen::VectorXd y,
             Eigen::VectorXd f_hat, GpcTrainLog log = {})
        : spec_(spec), domain_x_(std::move(domain_x)), domain_theta_(std::move(domain_theta)),
          points_(std::move(train_points)), y_(std::move(y)), f_hat_(std::move(f_hat)), log_(std::move(log)) {
        build_factors();
    }

    const KernelSpec& spec() const { return spec_; }
    const Box& domain_x() const { return domain_x_; }
    const Box& domain_theta() const { return domain_theta_; }
    const Eigen::MatrixXd& train_points() const { return points_; }
    const Eigen::VectorXd& labels() const { return y_; }
    const Eigen::VectorXd& f_hat() const { return f_hat_; }
    const Eigen::VectorXd& sqrt_weights() const { return sqrt_w_; }
    const Eigen::MatrixXd& cholesky_factor() const { return chol_; }
    const GpcTrainLog& train_log() const { return log_; }
    /// y - pi(f_hat); the predictive mean is k*' times this.
    const Eigen::VectorXd& latent_gradient() const { return grad_; }
    /// W^1/2 B^-1 W^1/2; the predictive variance is 1 - k*' precision k*.
    const Eigen::MatrixXd& precision() const { return precision_; }
    int dim_x() const { return domain_x_.dim(); }
    int dim_theta() const { return domain_theta_.dim(); }

    /// Newton residual at the stored mode: one Newton step from f_hat gives
    /// a' with f' = K a'; at the mode a' = y - pi(f_hat) and f' = f_hat.
    double stationarity_residual() const {
        const Eigen::MatrixXd K = gram(spec_, points_).entries;
        const Eigen::VectorXd a = newton_a(K, f_hat_);
        return std::max((a - grad_).cwiseAbs().maxCoeff(), (K * a - f_hat_).cwiseAbs().maxCoeff());
    }

    /// Latent predictive mean and variance at unit-coordinate joint points.
    void latent_moments(const Eigen::MatrixXd& z, Eigen::VectorXd& mean, Eigen::VectorXd& var) const {
        if (z.cols() != points_.cols()) throw InputError("GPC prediction: dimension mismatch");
        const Eigen::MatrixXd Ks = cross_gram(spec_, z, points_);  // M x N
        mean = Ks * grad_;
        const Eigen::MatrixXd T = Ks * precision_;
        var = (1.0 - (T.cwiseProduct(Ks)).rowwise().sum().array()).cwiseMax(0.0);
    }

    /// Predictive probability sigma(mu / sqrt(1 + pi s^2 / 8)) at unit-coordinate joint points.
    Eigen::VectorXd predict_unit(const Eigen::MatrixXd& z) const {
        Eigen::VectorXd mean, var;
        latent_moments(z, mean, var);
        Eigen::VectorXd p(z.rows());
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            p(i) = sigmoid(mean(i) / std::sqrt(1.0 + std::numbers::pi * var(i) / 8.0));
        }
        return p;
    }

    /// Same as predict_unit with every x row paired with one theta.
    Eigen::VectorXd predict_unit(const Eigen::MatrixXd& x_unit, const Eigen::VectorXd& theta_unit) const {
        if (x_unit.cols() != dim_x() || theta_unit.size() != dim_theta()) throw InputError("GPC prediction: dimension mismatch");
        Eigen::MatrixXd z(x_unit.rows(), dim_x() + dim_theta());
        z.leftCols(dim_x()) = x_unit;
        z.rightCols(dim_theta()) = theta_unit.transpose().replicate(x_unit.rows(), 1);
        return predict_unit(z);
    }

private:
    Eigen::VectorXd newton_a(const Eigen::MatrixXd& K, const Eigen::VectorXd& f) const {
        const Eigen::Index n = f.size();
        Eigen::VectorXd pi(n), sw(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            pi(i) = sigmoid(f(i));
            sw(i) = std::sqrt(pi(i) * (1.0 - pi(i)));
        }
        Eigen::MatrixXd B = sw.asDiagonal() * K * sw.asDiagonal();
        B.diagonal().array() += 1.0;
        Eigen::LLT<Eigen::MatrixXd> llt(B);
        const Eigen::VectorXd b = sw.cwiseProduct(sw).cwiseProduct(f) + (y_ - pi);
        return b - sw.cwiseProduct(llt.solve(sw.cwiseProduct(K * b)));
    }

    void build_factors() {
        spec_.validate();
        const Eigen::Index n = f_hat_.size();
        if (points_.rows() != n || y_.size() != n) throw InputError("GpcModel: inconsistent training sizes");
        grad_.resize(n);
        sqrt_w_.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = sigmoid(f_hat_(i));
            grad_(i) = y_(i) - p;
            sqrt_w_(i) = std::sqrt(p * (1.0 - p));
        }
        const Eigen::MatrixXd K = gram(spec_, points_).entries;
        Eigen::MatrixXd B = sqrt_w_.asDiagonal() * K * sqrt_w_.asDiagonal();
        B.diagonal().array() += 1.0;
        Eigen::LLT<Eigen::MatrixXd> llt(B);
        if (llt.info() != Eigen::Success) throw NumericalError("GPC: Cholesky of I + W^1/2 K W^1/2 failed");
        chol_ = llt.matrixL();
        // precision = W^1/2 B^{-1} W^1/2, so var = k** - k*' precision k*.
        Eigen::MatrixXd T = sqrt_w_.asDiagonal().toDenseMatrix();
        llt.matrixL().solveInPlace(T);
        precision_ = T.transpose() * T;
    }

    KernelSpec spec_;
    Box domain_x_, domain_theta_;
    Eigen::MatrixXd points_;
    Eigen::VectorXd y_;
    Eigen::VectorXd f_hat_;
    Eigen::VectorXd grad_;
    Eigen::VectorXd sqrt_w_;
    Eigen::MatrixXd chol_;
    Eigen::MatrixXd precision_;
    GpcTrainLog log_;
};

/// Pivoted Cholesky of the RBF kernel over `pts`: K ~= L L' with every entry of
/// the residual bounded by `tol`. Returns L with as many columns as pivots taken,
/// or an empty matrix if more than `max_rank` pivots would be needed.
inline Eigen::MatrixXd pivoted_cholesky_rbf(const Eigen::MatrixXd& pts, double phi, double tol, Eigen::Index max_rank) {
    const Eigen::Index P = pts.rows();
    Eigen::VectorXd diag = Eigen::VectorXd::Ones(P);
    Eigen::MatrixXd L(P, std::min(max_rank, P));
    Eigen::Index r = 0;
    for (;; ++r) {
        Eigen::Index piv;
        // For a PSD residual |R_ij| <= sqrt(R_ii R_jj) <= max diag.
        if (diag.maxCoeff(&piv) <= tol) break;
        if (r == L.cols()) return {};
        Eigen::VectorXd col(P);
        for (Eigen::Index i = 0; i < P; ++i) col(i) = std::exp(-phi * (pts.row(i) - pts.row(piv)).squaredNorm());
        if (r > 0) col.noalias() -= L.leftCols(r) * L.row(piv).head(r).transpose();
        L.col(r) = col / std::sqrt(diag(piv));
        diag -= L.col(r).cwiseAbs2();
        diag(piv) = 0.0;
    }
    return L.leftCols(r);
}

/// p-hat at a fixed set of control-input nodes as a function of theta alone.
///
/// For the RBF kernel k((x,t),(x',t')) = k_x(x,x') k_t(t,t'), so the cross
/// kernel is K_x diag(k_t). With K_x ~= U R' from a pivoted Cholesky over nodes
/// and training inputs (entrywise error <= 1e-12) each evaluation costs
/// O(N^2 r + M r^2) instead of O(M N^2). Matern kernels, or ranks where that
/// is no cheaper, fall back to the direct predictor.
class NodePredictor {
public:
    NodePredictor(std::shared_ptr<const GpcModel> model, Eigen::MatrixXd x_nodes)
        : model_(std::move(model)), nodes_(std::move(x_nodes)) {
        const auto& m = *model_;
        if (nodes_.cols() != m.dim_x()) throw InputError("NodePredictor: node dimension mismatch");
        if (m.spec().family != KernelFamily::Rbf) return;
        const Eigen::Index M = nodes_.rows(), N = m.train_points().rows();
        Eigen::MatrixXd all(M + N, m.dim_x());
        all.topRows(M) = nodes_;
        all.bottomRows(N) = m.train_points().leftCols(m.dim_x());
        // Break-even rank where 2 N^2 r + 2 M r^2 matches 2 M N^2.
        const double Md = static_cast<double>(M), Nd = static_cast<double>(N);
        const double breakeven = (-Nd * Nd + std::sqrt(Nd * Nd * Nd * Nd + 4.0 * Md * Md * Nd * Nd)) / (2.0 * Md);
        const auto max_rank = static_cast<Eigen::Index>(0.7 * breakeven);
        if (max_rank < 1) return;
        Eigen::MatrixXd L = pivoted_cholesky_rbf(all, m.spec().phi, 1e-12, max_rank);
        if (L.cols() == 0) return;
        U_ = L.topRows(M);
        R_ = L.bottomRows(N);
        low_rank_ = true;
    }

    bool low_rank() const { return low_rank_; }
    Eigen::Index rank() const { return low_rank_ ? U_.cols() : 0; }
    const Eigen::MatrixXd& nodes() const { return nodes_; }

    Eigen::VectorXd operator()(const Eigen::VectorXd& theta_unit) const {
        const auto& m = *model_;
        if (!low_rank_) return m.predict_unit(nodes_, theta_unit);
        if (theta_unit.size() != m.dim_theta()) throw InputError("NodePredictor: theta dimension mismatch");
        const Eigen::Index N = R_.rows();
        const auto T = m.train_points().rightCols(m.dim_theta());
        Eigen::VectorXd kt(N);
        for (Eigen::Index i = 0; i < N; ++i) kt(i) = std::exp(-m.spec().phi * (T.row(i).transpose() - theta_unit).squaredNorm());
        const Eigen::MatrixXd DR = kt.asDiagonal() * R_;
        const Eigen::VectorXd mean = U_ * (DR.transpose() * m.latent_gradient());
        // precision = C' C with C = L^-1 W^1/2, so DR' precision DR = S' S.
        Eigen::MatrixXd S = m.sqrt_weights().asDiagonal() * DR;
        m.cholesky_factor().triangularView<Eigen::Lower>().solveInPlace(S);
        const Eigen::MatrixXd G = S.transpose() * S;
        const Eigen::VectorXd quad = ((U_ * G).cwiseProduct(U_)).rowwise().sum();
        Eigen::VectorXd p(nodes_.rows());
        for (Eigen::Index j = 0; j < p.size(); ++j) {
            const double var = std::max(1.0 - quad(j), 0.0);
            p(j) = sigmoid(mean(j) / std::sqrt(1.0 + std::numbers::pi * var / 8.0));
        }
        return p;
    }

private:
    std::shared_ptr<const GpcModel> model_;
    Eigen::MatrixXd nodes_;
    Eigen::MatrixXd U_, R_;
    bool low_rank_ = false;
};

/// Laplace objective: sum_i log sigma((2 y_i - 1) f_i) - a' f / 2 with f = K a.
inline double laplace_objective(const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Eigen::VectorXd& a) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) ll -= log1pexp(-(2.0 * y(i) - 1.0) * f(i));
    return ll - 0.5 * a.dot(f);
}

namespace detail {

struct LaplaceMode {
    Eigen::VectorXd f;
    GpcTrainLog log;
};

/// Newton iteration for the posterior mode, parameterized through a with f = K a
/// and factorizing B = I + W^1/2 K W^1/2. Steps that lower the objective are halved.
inline LaplaceMode find_mode(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, const GpcOptions& opt) {
    const Eigen::Index n = y.size();
    LaplaceMode m;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    m.f = Eigen::VectorXd::Zero(n);
    double psi = laplace_objective(y, m.f, a);
    m.log.objective_trace.push_back(psi);
    Eigen::VectorXd pi(n), sw(n);
    double residual = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it <= opt.max_iterations; ++it) {
        for (Eigen::Index i = 0; i < n; ++i) {
            pi(i) = sigmoid(m.f(i));
            sw(i) = std::sqrt(pi(i) * (1.0 - pi(i)));
        }
        const double prev = residual;
        residual = (y - pi - a).cwiseAbs().maxCoeff();
        // Keep going past the reported tolerance so the mode is reproducible to
        // rounding level, and stop once Newton no longer makes progress.
        if (residual <= 1e-13 || it == opt.max_iterations) break;
        if (residual <= opt.residual_tol && residual > 0.1 * prev) break;

        Eigen::MatrixXd B = sw.asDiagonal() * K * sw.asDiagonal();
        B.diagonal().array() += 1.0;
        Eigen::LLT<Eigen::MatrixXd> llt(B);
        if (llt.info() != Eigen::Success) throw NumericalError("GPC: Cholesky of I + W^1/2 K W^1/2 failed");
        const Eigen::VectorXd b = sw.cwiseProduct(sw).cwiseProduct(m.f) + (y - pi);
        const Eigen::VectorXd a_full = b - sw.cwiseProduct(llt.solve(sw.cwiseProduct(K * b)));
        const Eigen::VectorXd da = a_full - a;

        double t = 1.0;
        bool accepted = false;
        for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
            const Eigen::VectorXd a_new = a + t * da;
            const Eigen::VectorXd f_new = K * a_new;
            const double psi_new = laplace_objective(y, f_new, a_new);
            if (std::isfinite(psi_new) && psi_new >= psi) {
                a = a_new;
                m.f = f_new;
                psi = psi_new;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        m.log.objective_trace.push_back(psi);
    }
    m.log.iterations = it;
    m.log.objective = psi;
    m.log.residual = residual;
    m.log.converged = residual <= opt.residual_tol;
    return m;
}

/// Predictive probabilities at a few query points straight from the mode,
/// without forming the N x N precision matrix. Used by cross-validation.
inline Eigen::VectorXd laplace_predict(const KernelSpec& spec, const Eigen::MatrixXd& K, const Eigen::MatrixXd& train,
                                       const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Eigen::MatrixXd& query) {
    const Eigen::Index n = f.size();
    Eigen::VectorXd grad(n), sw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double p = sigmoid(f(i));
        grad(i) = y(i) - p;
        sw(i) = std::sqrt(p * (1.0 - p));
    }
    Eigen::MatrixXd B = sw.asDiagonal() * K * sw.asDiagonal();
    B.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> llt(B);
    if (llt.info() != Eigen::Success) throw NumericalError("GPC: Cholesky of I + W^1/2 K W^1/2 failed");
    const Eigen::MatrixXd Ks = cross_gram(spec, query, train);
    const Eigen::VectorXd mean = Ks * grad;
    const Eigen::MatrixXd V = llt.matrixL().solve(sw.asDiagonal() * Ks.transpose());
    Eigen::VectorXd p(query.rows());
    for (Eigen::Index i = 0; i < query.rows(); ++i) {
        const double var = std::max(0.0, 1.0 - V.col(i).squaredNorm());
        p(i) = sigmoid(mean(i) / std::sqrt(1.0 + std::numbers::pi * var / 8.0));
    }
    return p;
}

}  // namespace detail

inline GpcModel fit_gpc(const ComputerDataset& data, const KernelSpec& spec, const GpcOptions& opt = {}) {
    data.validate();
    spec.validate();
    const Eigen::MatrixXd Z = data.joint_unit();
    const Eigen::MatrixXd K = gram(spec, Z).entries;
    auto mode = detail::find_mode(K, data.y, opt);
    return GpcModel(spec, data.domain_x, data.domain_theta, Z, data.y, std::move(mode.f), std::move(mode.log));
}

/// Predictive probability at a physical-unit (x, theta).
inline double predict_p(const GpcModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& theta,
                        bool* extrapolated = nullptr) {
    if (x.size() != model.dim_x() || theta.size() != model.dim_theta()) throw InputError("predict_p: dimension mismatch");
    if (!x.allFinite() || !theta.allFinite()) throw InputError("predict_p: non-finite input");
    if (extrapolated) {
        bool out = false;
        for (int i = 0; i < model.dim_x(); ++i) out = out || !model.domain_x().contains(i, x(i));
        for (int i = 0; i < model.dim_theta(); ++i) out = out || !model.domain_theta().contains(i, theta(i));
        *extrapolated = out;
    }
    const Eigen::MatrixXd xu = model.domain_x().to_unit(Eigen::MatrixXd(x.transpose()));
    return model.predict_unit(xu, model.domain_theta().to_unit(theta))(0);
}

inline std::vector<double> default_phi_grid() { return {1.0, 3.0, 10.0, 30.0, 100.0}; }

struct GpcTuning {
    KernelSpec spec;
    std::vector<double> phi_grid;
    std::vector<double> cv_loss;
    std::vector<std::string> warnings;
};

/// RBF length-scale selection by stratified k-fold held-out log-loss; ties go to the smallest phi.
inline GpcTuning cv_tune_gpc(const ComputerDataset& data, const std::vector<double>& phi_grid, int folds,
                             std::uint64_t seed, const GpcOptions& opt = {}) {
    data.validate();
    if (phi_grid.empty()) throw InputError("cv_tune_gpc: empty grid");
    if (folds < 2) throw InputError("cv_tune_gpc: folds must be >= 2");
    for (double p : phi_grid)
        if (!(p > 0.0)) throw InputError("cv_tune_gpc: phi grid must be positive");
    GpcTuning out;
    out.phi_grid = phi_grid;
    out.cv_loss.assign(phi_grid.size(), 0.0);
    const Eigen::MatrixXd Z = data.joint_unit();
    const auto assign = stratified_folds(data.y, folds, seed);
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
        for (std::size_t k = 0; k < phi_grid.size(); ++k) {
            const auto spec = KernelSpec::rbf(phi_grid[k]);
            const Eigen::MatrixXd K = gram(spec, Ztr).entries;
            const auto mode = detail::find_mode(K, ytr, opt);
            out.cv_loss[k] += log_loss(yte, detail::laplace_predict(spec, K, Ztr, ytr, mode.f, Zte));
        }
    }
    if (used == 0) throw InputError("cv_tune_gpc: every fold was degenerate");
    std::size_t best = 0;
    for (std::size_t k = 0; k < phi_grid.size(); ++k) {
        out.cv_loss[k] /= used;
        if (out.cv_loss[k] < out.cv_loss[best] ||
            (out.cv_loss[k] == out.cv_loss[best] && phi_grid[k] < phi_grid[best]))
            best = k;
    }
    out.spec = KernelSpec::rbf(phi_grid[best]);
    return out;
}

}  // namespace l2cal

#endif
