#ifndef L2CAL_INFERENCE_HPP
#define L2CAL_INFERENCE_HPP

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "l2cal/box.hpp"
#include "l2cal/calibrator.hpp"
#include "l2cal/error.hpp"

namespace l2cal {

/// plugin: fitted eta-hat and p-hat at theta-hat. oracle: true surfaces at theta*.
enum class InferenceMode { Plugin, Oracle };

inline const char* to_string(InferenceMode m) { return m == InferenceMode::Plugin ? "plugin" : "oracle"; }

/// Central-difference steps in unit theta coordinates, scaled by max(1, |theta_i|).
struct FiniteDifferenceSteps {
    double gradient = 1e-4;
    double hessian = 1e-3;
};

struct AsymptoticReport {
    Eigen::MatrixXd V_hat;
    Eigen::MatrixXd W_hat;
    Eigen::MatrixXd cov;           ///< 4 V^-1 W V^-1 / n, unit theta coordinates
    Eigen::VectorXd se;            ///< sqrt(diag(cov))
    Eigen::MatrixXd cov_physical;  ///< delta-method transform to physical units
    Eigen::VectorXd se_physical;
    double cond_V = 0.0;
    long n = 0;
    InferenceMode mode = InferenceMode::Plugin;
    std::vector<std::string> warnings;
};

inline constexpr double kMaxConditionV = 1e10;

/// V = E[ d^2/dtheta dtheta' (eta(X) - p(X, theta))^2 ] as the Hessian of the
/// node-averaged squared gap, by central second differences. Symmetrized.
inline Eigen::MatrixXd estimate_V(const L2Objective& obj, const Eigen::VectorXd& theta, const FiniteDifferenceSteps& steps = {}) {
    const Eigen::Index q = theta.size();
    if (q != obj.dim_theta) throw InputError("estimate_V: theta has wrong dimension");
    auto S = [&](const Eigen::VectorXd& t) { return obj.gap(t).squaredNorm() / static_cast<double>(obj.size()); };
    Eigen::VectorXd h(q);
    for (Eigen::Index i = 0; i < q; ++i) h(i) = steps.hessian * std::max(1.0, std::abs(theta(i)));
    const double s0 = S(theta);
    Eigen::MatrixXd V(q, q);
    for (Eigen::Index i = 0; i < q; ++i) {
        Eigen::VectorXd tp = theta, tm = theta;
        tp(i) += h(i);
        tm(i) -= h(i);
        V(i, i) = (S(tp) - 2.0 * s0 + S(tm)) / (h(i) * h(i));
        for (Eigen::Index j = 0; j < i; ++j) {
            Eigen::VectorXd pp = theta, pm = theta, mp = theta, mm = theta;
            pp(i) += h(i), pp(j) += h(j);
            pm(i) += h(i), pm(j) -= h(j);
            mp(i) -= h(i), mp(j) += h(j);
            mm(i) -= h(i), mm(j) -= h(j);
            V(i, j) = V(j, i) = (S(pp) - S(pm) - S(mp) + S(mm)) / (4.0 * h(i) * h(j));
        }
    }
    if (!V.allFinite()) throw NumericalError("estimate_V: non-finite second differences");
    return obj.volume * V;
}

/// Node-wise gradient of p with respect to theta by central differences; M x q.
inline Eigen::MatrixXd p_theta_gradient(const L2Objective& obj, const Eigen::VectorXd& theta, double step) {
    const Eigen::Index q = theta.size();
    Eigen::MatrixXd G(obj.size(), q);
    for (Eigen::Index i = 0; i < q; ++i) {
        const double h = step * std::max(1.0, std::abs(theta(i)));
        Eigen::VectorXd tp = theta, tm = theta;
        tp(i) += h;
        tm(i) -= h;
        G.col(i) = (obj.p_nodes(tp) - obj.p_nodes(tm)) / (2.0 * h);
    }
    return G;
}

/// W = E[ eta(X)(1 - eta(X)) dp/dtheta dp/dtheta' ] at theta. PSD by construction.
inline Eigen::MatrixXd estimate_W(const L2Objective& obj, const Eigen::VectorXd& theta, const FiniteDifferenceSteps& steps = {}) {
    if (theta.size() != obj.dim_theta) throw InputError("estimate_W: theta has wrong dimension");
    const Eigen::MatrixXd G = p_theta_gradient(obj, theta, steps.gradient);
    const Eigen::VectorXd wts = obj.eta_nodes.array() * (1.0 - obj.eta_nodes.array());
    Eigen::MatrixXd W = G.transpose() * wts.asDiagonal() * G / static_cast<double>(obj.size());
    W = 0.5 * (W + W.transpose()).eval();
    if (!W.allFinite()) throw NumericalError("estimate_W: non-finite gradient");
    return obj.volume * W;
}

inline double condition_number(const Eigen::MatrixXd& V) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseAbs();
    const double lo = ev.minCoeff(), hi = ev.maxCoeff();
    if (hi == 0.0 || lo == 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

/// cov = 4 V^-1 W V^-1 / n. Throws when V is singular (condition number >= 1e10).
inline AsymptoticReport sandwich(const Eigen::MatrixXd& V, const Eigen::MatrixXd& W, long n) {
    if (V.rows() != V.cols() || W.rows() != W.cols() || V.rows() != W.rows())
        throw InputError("sandwich: V and W must be square and the same size");
    if (n < 1) throw InputError("sandwich: n must be positive");
    AsymptoticReport r;
    r.V_hat = V;
    r.W_hat = W;
    r.n = n;
    r.cond_V = condition_number(V);
    if (!(r.cond_V < kMaxConditionV)) {
        throw NumericalError("sandwich: V is singular (condition number " + std::to_string(r.cond_V) +
                             "); try oracle mode or a larger quadrature");
    }
    const Eigen::MatrixXd Vinv = V.inverse();
    Eigen::MatrixXd cov = 4.0 * Vinv * W * Vinv / static_cast<double>(n);
    r.cov = 0.5 * (cov + cov.transpose());
    r.se = r.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-8 * std::max(W.trace(), 1e-300))
        r.warnings.push_back("W is not positive semidefinite");
    r.cov_physical = r.cov;
    r.se_physical = r.se;
    return r;
}

/// Delta-method transform of a unit-coordinate covariance to physical units at theta_unit.
inline void attach_physical(AsymptoticReport& r, const Box& theta_box, const Eigen::VectorXd& theta_unit) {
    Eigen::VectorXd J(theta_unit.size());
    for (Eigen::Index i = 0; i < theta_unit.size(); ++i) J(i) = theta_box.jacobian(static_cast<int>(i), theta_unit(i));
    r.cov_physical = J.asDiagonal() * r.cov * J.asDiagonal();
    r.se_physical = r.cov_physical.diagonal().cwiseMax(0.0).cwiseSqrt();
}

/// V, W and the sandwich at theta_unit, with the quadrature nodes of `obj`.
inline AsymptoticReport asymptotic_report(const L2Objective& obj, const Eigen::VectorXd& theta_unit, long n,
                                          InferenceMode mode, const Box& theta_box,
                                          const FiniteDifferenceSteps& steps = {}) {
    const Eigen::MatrixXd V = estimate_V(obj, theta_unit, steps);
    const Eigen::MatrixXd W = estimate_W(obj, theta_unit, steps);
    AsymptoticReport r = sandwich(V, W, n);
    r.mode = mode;
    attach_physical(r, theta_box, theta_unit);
    if (detail::on_unit_boundary(theta_unit))
        r.warnings.push_back("theta lies on the boundary of Theta; the normal approximation assumes an interior point");
    return r;
}

}  // namespace l2cal

#endif
