#ifndef L2CAL_CALIBRATOR_HPP
#define L2CAL_CALIBRATOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "l2cal/box.hpp"
#include "l2cal/error.hpp"
#include "l2cal/gpc.hpp"
#include "l2cal/klr.hpp"
#include "l2cal/sampling.hpp"

namespace l2cal {

/// Physical probability surface on unit-coordinate control inputs (rows are points).
using EtaSurface = std::function<Eigen::VectorXd(const Eigen::MatrixXd& x_unit)>;
/// Computer probability surface p(x, theta) on unit coordinates, one theta for all rows.
using PSurface = std::function<Eigen::VectorXd(const Eigen::MatrixXd& x_unit, const Eigen::VectorXd& theta_unit)>;

/// p at the objective's fixed nodes as a function of theta alone.
using NodeSurface = std::function<Eigen::VectorXd(const Eigen::VectorXd& theta_unit)>;

inline EtaSurface eta_surface(const KlrModel& model) {
    auto m = std::make_shared<const KlrModel>(model);
    return [m](const Eigen::MatrixXd& x) { return m->eta_unit(x); };
}

inline PSurface p_surface(const GpcModel& model) {
    auto m = std::make_shared<const GpcModel>(model);
    return [m](const Eigen::MatrixXd& x, const Eigen::VectorXd& t) { return m->predict_unit(x, t); };
}

/// Quadrature approximation of the squared L2(Omega) gap between eta and p(., theta).
/// Nodes are drawn once, so the objective is a deterministic smooth function of theta.
struct L2Objective {
    EtaSurface eta;
    PSurface p;
    NodeSurface p_nodes;         ///< p(nodes, theta); may use a node-specific fast path
    Eigen::MatrixXd nodes;       ///< M x d in the unit box
    Eigen::VectorXd eta_nodes;   ///< eta at the nodes
    QuadRule rule = QuadRule::Sobol;
    int dim_theta = 0;
    double volume = 1.0;         ///< Vol(Omega) in the coordinates of `nodes`

    static L2Objective build(EtaSurface eta, PSurface p, int dim_x, int dim_theta, Eigen::Index quad_points,
                             QuadRule rule, std::uint64_t seed) {
        if (dim_x < 1 || dim_theta < 1) throw InputError("L2Objective: dimensions must be positive");
        L2Objective o;
        o.eta = std::move(eta);
        o.p = std::move(p);
        o.rule = rule;
        o.dim_theta = dim_theta;
        o.nodes = quadrature_nodes(rule, quad_points, dim_x, seed);
        o.eta_nodes = o.eta(o.nodes);
        o.p_nodes = [p = o.p, nodes = o.nodes](const Eigen::VectorXd& t) { return p(nodes, t); };
        return o;
    }

    /// Objective between a fitted KLR and a fitted emulator.
    static L2Objective from_models(const KlrModel& eta_model, const GpcModel& p_model, Eigen::Index quad_points,
                                   QuadRule rule, std::uint64_t seed) {
        if (eta_model.centers.cols() != p_model.dim_x())
            throw InputError("L2Objective: KLR and emulator disagree on the number of control inputs");
        auto pm = std::make_shared<const GpcModel>(p_model);
        L2Objective o = build(eta_surface(eta_model),
                              [pm](const Eigen::MatrixXd& x, const Eigen::VectorXd& t) { return pm->predict_unit(x, t); },
                              p_model.dim_x(), p_model.dim_theta(), quad_points, rule, seed);
        auto np = std::make_shared<const NodePredictor>(pm, o.nodes);
        o.p_nodes = [np](const Eigen::VectorXd& t) { return (*np)(t); };
        return o;
    }

    Eigen::Index size() const { return nodes.rows(); }

    /// Gap eta(z_j) - p(z_j, theta) at every node.
    Eigen::VectorXd gap(const Eigen::VectorXd& theta_unit) const { return eta_nodes - p_nodes(theta_unit); }

    /// Vol(Omega) * mean_j gap_j^2.
    double squared(const Eigen::VectorXd& theta_unit) const {
        return volume * gap(theta_unit).squaredNorm() / static_cast<double>(size());
    }
};

inline double l2_distance(const L2Objective& obj, const Eigen::VectorXd& theta_unit) {
    if (theta_unit.size() != obj.dim_theta) throw InputError("l2_distance: theta has wrong dimension");
    for (Eigen::Index i = 0; i < theta_unit.size(); ++i)
        if (!(theta_unit(i) >= -1e-9 && theta_unit(i) <= 1.0 + 1e-9))
            throw InputError("l2_distance: theta outside the unit box");
    return std::sqrt(obj.squared(theta_unit));
}

enum class StartStatus { Converged, MaxIterations, LineSearchFailed };

inline const char* to_string(StartStatus s) {
    switch (s) {
        case StartStatus::Converged: return "converged";
        case StartStatus::MaxIterations: return "max_iterations";
        default: return "line_search_failed";
    }
}

struct StartTrace {
    Eigen::VectorXd start;  ///< unit coordinates
    Eigen::VectorXd end;    ///< unit coordinates
    double end_value = 0.0; ///< L2 distance at `end`
    int iterations = 0;
    int evaluations = 0;
    StartStatus status = StartStatus::Converged;
};

struct CalibrationResult {
    Eigen::VectorXd theta_hat;   ///< physical units
    Eigen::VectorXd theta_unit;  ///< unit box
    double l2_distance = 0.0;    ///< NaN for the misclassification baseline
    double objective = 0.0;      ///< minimized objective (squared L2, or misclassification count)
    std::vector<StartTrace> starts;
    bool flat_flag = false;
    bool on_boundary = false;
    std::vector<std::string> warnings;
};

struct CalibrateOptions {
    int n_starts = 10;
    std::uint64_t seed = 0;
    int max_iterations = 100;
    int max_halvings = 30;
    double fd_step = 1e-4;        ///< relative central-difference step in unit coordinates
    double gradient_tol = 1e-14;  ///< projected-gradient sup-norm on the squared distance
    double step_tol = 1e-8;       ///< stop when an accepted step moves less than this (unit coordinates)
    double relative_drop_tol = 1e-8;  ///< stop when an accepted step lowers the objective by less than this fraction
    int threads = 1;
};

namespace detail {

struct BoxMinimizer {
    std::function<double(const Eigen::VectorXd&)> f;
    const CalibrateOptions& opt;
    int evaluations = 0;

    double eval(const Eigen::VectorXd& x) {
        ++evaluations;
        const double v = f(x);
        if (!std::isfinite(v)) throw NumericalError("calibration objective is not finite");
        return v;
    }

    /// Central differences, one-sided against the box faces.
    Eigen::VectorXd gradient(const Eigen::VectorXd& x, double fx) {
        Eigen::VectorXd g(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double h = opt.fd_step * std::max(1.0, std::abs(x(i)));
            Eigen::VectorXd xp = x, xm = x;
            if (x(i) + h > 1.0) {
                xm(i) -= h;
                g(i) = (fx - eval(xm)) / h;
            } else if (x(i) - h < 0.0) {
                xp(i) += h;
                g(i) = (eval(xp) - fx) / h;
            } else {
                xp(i) += h;
                xm(i) -= h;
                g(i) = (eval(xp) - eval(xm)) / (2.0 * h);
            }
        }
        return g;
    }

    static Eigen::VectorXd project(Eigen::VectorXd x) { return x.cwiseMax(0.0).cwiseMin(1.0); }

    static std::vector<bool> active_set(const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
        std::vector<bool> act(static_cast<std::size_t>(x.size()));
        for (Eigen::Index i = 0; i < x.size(); ++i)
            act[static_cast<std::size_t>(i)] = (x(i) <= 0.0 && g(i) > 0.0) || (x(i) >= 1.0 && g(i) < 0.0);
        return act;
    }

    /// Projected BFGS: the inverse-Hessian approximation acts on the free
    /// variables; bound-active coordinates are frozen for the step, and the
    /// Armijo condition is checked along the projected path.
    StartTrace run(const Eigen::VectorXd& x0) {
        StartTrace tr;
        tr.start = x0;
        const Eigen::Index q = x0.size();
        Eigen::VectorXd x = project(x0);
        double fx = eval(x);
        Eigen::VectorXd g = gradient(x, fx);
        Eigen::MatrixXd H = Eigen::MatrixXd::Identity(q, q);
        bool fresh = true;
        tr.status = StartStatus::MaxIterations;
        int it = 0;
        for (; it < opt.max_iterations; ++it) {
            const auto act = active_set(x, g);
            Eigen::VectorXd pg = g;
            for (Eigen::Index i = 0; i < q; ++i)
                if (act[static_cast<std::size_t>(i)]) pg(i) = 0.0;
            if (pg.cwiseAbs().maxCoeff() <= opt.gradient_tol) {
                tr.status = StartStatus::Converged;
                break;
            }
            Eigen::MatrixXd Hf = H;
            for (Eigen::Index i = 0; i < q; ++i) {
                if (act[static_cast<std::size_t>(i)]) {
                    Hf.row(i).setZero();
                    Hf.col(i).setZero();
                }
            }
            Eigen::VectorXd d = -Hf * pg;
            if (g.dot(d) >= 0.0) {
                H.setIdentity();
                fresh = true;
                d = -pg;
            }
            // Keep the trial step inside a fraction of the box on fresh curvature.
            double t = 1.0;
            if (fresh) t = std::min(1.0, 0.25 / d.cwiseAbs().maxCoeff());

            bool accepted = false;
            Eigen::VectorXd xn;
            double fn = 0.0;
            for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
                double tt = t;
                for (int h = 0; h <= opt.max_halvings; ++h, tt *= 0.5) {
                    xn = project(x + tt * d);
                    fn = eval(xn);
                    if (fn <= fx + 1e-4 * g.dot(xn - x) && fn <= fx) {
                        accepted = true;
                        break;
                    }
                }
                if (!accepted && !fresh) {
                    H.setIdentity();
                    fresh = true;
                    d = -pg;
                    t = std::min(1.0, 0.25 / d.cwiseAbs().maxCoeff());
                } else if (!accepted) {
                    break;
                }
            }
            if (!accepted) {
                // Near the minimizer finite-difference noise can stall the search.
                tr.status = pg.cwiseAbs().maxCoeff() <= 1e-7 ? StartStatus::Converged : StartStatus::LineSearchFailed;
                break;
            }
            const Eigen::VectorXd s = xn - x;
            const Eigen::VectorXd gn = gradient(xn, fn);
            const Eigen::VectorXd y = gn - g;
            const double sy = s.dot(y);
            const bool tiny_step = s.cwiseAbs().maxCoeff() < opt.step_tol;
            const bool tiny_drop = fx - fn <= opt.relative_drop_tol * std::max(fx, 1e-300);
            x = xn;
            g = gn;
            fx = fn;
            if (sy > 1e-12 * s.norm() * y.norm()) {
                if (fresh) H *= sy / y.squaredNorm();
                const double rho = 1.0 / sy;
                const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(q, q);
                H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
                fresh = false;
            }
            if (tiny_step || tiny_drop) {
                tr.status = StartStatus::Converged;
                ++it;
                break;
            }
        }
        tr.end = x;
        tr.end_value = std::sqrt(std::max(fx, 0.0));
        tr.iterations = it;
        tr.evaluations = evaluations;
        return tr;
    }
};

inline bool on_unit_boundary(const Eigen::VectorXd& u) {
    for (Eigen::Index i = 0; i < u.size(); ++i)
        if (u(i) <= 1e-8 || u(i) >= 1.0 - 1e-8) return true;
    return false;
}

inline bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

}  // namespace detail

/// Minimizes the L2 distance over Theta by projected BFGS from Latin-hypercube
/// starts; the best end point wins, ties broken by lexicographically smallest theta.
inline CalibrationResult calibrate(const L2Objective& obj, const Box& theta_box, const CalibrateOptions& opt = {}) {
    if (opt.n_starts < 1) throw InputError("calibrate: n_starts must be >= 1");
    if (theta_box.dim() != obj.dim_theta) throw InputError("calibrate: theta box dimension mismatch");
    const Eigen::MatrixXd starts = latin_hypercube(opt.n_starts, obj.dim_theta, substream_seed(opt.seed, "optimizer"));

    auto run_one = [&](int s) {
        detail::BoxMinimizer bm{[&obj](const Eigen::VectorXd& t) { return obj.squared(t); }, opt};
        return bm.run(starts.row(s).transpose());
    };

    CalibrationResult res;
    res.starts.resize(static_cast<std::size_t>(opt.n_starts));
    if (opt.threads > 1) {
        std::vector<std::future<StartTrace>> fut;
        for (int s = 0; s < opt.n_starts; ++s) fut.push_back(std::async(std::launch::async, run_one, s));
        for (int s = 0; s < opt.n_starts; ++s) res.starts[static_cast<std::size_t>(s)] = fut[static_cast<std::size_t>(s)].get();
    } else {
        for (int s = 0; s < opt.n_starts; ++s) res.starts[static_cast<std::size_t>(s)] = run_one(s);
    }

    bool all_failed = true;
    for (const auto& t : res.starts)
        if (t.status != StartStatus::LineSearchFailed || t.iterations > 0) all_failed = false;
    if (all_failed) throw OptimizationError("calibrate: line search failed at every start");

    const StartTrace* best = nullptr;
    for (const auto& t : res.starts) {
        if (!best || t.end_value < best->end_value ||
            (t.end_value == best->end_value && detail::lex_less(t.end, best->end)))
            best = &t;
    }
    res.theta_unit = best->end;
    res.theta_hat = theta_box.from_unit(best->end);
    res.l2_distance = std::sqrt(obj.squared(best->end));
    res.objective = res.l2_distance * res.l2_distance;
    res.on_boundary = detail::on_unit_boundary(best->end);
    if (res.on_boundary) res.warnings.push_back("theta_hat lies on the boundary of Theta");

    // Flat or multimodal objective: converged starts agree in value but not in location.
    double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin, spread = 0.0;
    std::vector<const StartTrace*> conv;
    for (const auto& t : res.starts)
        if (t.status == StartStatus::Converged) conv.push_back(&t);
    for (auto* a : conv) {
        vmin = std::min(vmin, a->end_value);
        vmax = std::max(vmax, a->end_value);
        for (auto* b : conv) spread = std::max(spread, (a->end - b->end).cwiseAbs().maxCoeff());
    }
    res.flat_flag = conv.size() >= 2 && vmax - vmin < 1e-6 && spread > 0.05;
    if (res.flat_flag) res.warnings.push_back("objective is flat or multimodal: starts reach equal values at distant points");
    return res;
}

/// 0/1 label predictor y^s(x, theta) on unit coordinates.
using LabelPredictor = std::function<Eigen::VectorXd(const Eigen::MatrixXd& x_unit, const Eigen::VectorXd& theta_unit)>;

/// Misclassification baseline: theta minimizing sum_i 1{y_i != yhat(x_i, theta)}
/// over a regular grid of `points_per_dim` values per axis (lexicographic order,
/// first coordinate slowest; first minimum wins).
inline CalibrationResult calibrate_naive(const PhysicalDataset& data, const LabelPredictor& classifier,
                                         const Box& theta_box, int points_per_dim) {
    data.validate();
    if (points_per_dim < 2) throw InputError("calibrate_naive: need at least 2 grid points per axis");
    const int q = theta_box.dim();
    const Eigen::MatrixXd xu = data.domain.to_unit(data.x);
    std::vector<int> idx(static_cast<std::size_t>(q), 0);
    Eigen::VectorXd t(q), best_t(q);
    double best = std::numeric_limits<double>::infinity(), worst = -best;
    for (;;) {
        for (int j = 0; j < q; ++j) t(j) = static_cast<double>(idx[static_cast<std::size_t>(j)]) / (points_per_dim - 1);
        const Eigen::VectorXd yhat = classifier(xu, t);
        double miss = 0.0;
        for (Eigen::Index i = 0; i < data.y.size(); ++i) miss += (yhat(i) > 0.5) != (data.y(i) > 0.5) ? 1.0 : 0.0;
        if (miss < best) {
            best = miss;
            best_t = t;
        }
        worst = std::max(worst, miss);
        int j = q - 1;
        while (j >= 0 && ++idx[static_cast<std::size_t>(j)] == points_per_dim) idx[static_cast<std::size_t>(j--)] = 0;
        if (j < 0) break;
    }
    CalibrationResult res;
    res.theta_unit = best_t;
    res.theta_hat = theta_box.from_unit(best_t);
    res.l2_distance = std::numeric_limits<double>::quiet_NaN();
    res.objective = best;
    res.flat_flag = best == worst;
    res.on_boundary = detail::on_unit_boundary(best_t);
    if (res.flat_flag) res.warnings.push_back("misclassification count does not depend on theta");
    return res;
}

}  // namespace l2cal

#endif
