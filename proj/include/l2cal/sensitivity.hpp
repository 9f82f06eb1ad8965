#ifndef L2CAL_SENSITIVITY_HPP
#define L2CAL_SENSITIVITY_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "l2cal/error.hpp"
#include "l2cal/gpc.hpp"
#include "l2cal/rng.hpp"

namespace l2cal {

/// Function of a point in [0,1]^D, evaluated on many rows at once.
using CubeSurface = std::function<Eigen::VectorXd(const Eigen::MatrixXd& u)>;

struct SobolResult {
    std::vector<int> inputs;  ///< column index of each reported input
    Eigen::VectorXd indices;  ///< first-order S_i
    Eigen::VectorXd ci_lo;    ///< 95% percentile bootstrap
    Eigen::VectorXd ci_hi;
    double variance = 0.0;
    int n_mc = 0;
    int n_boot = 0;
};

namespace detail {

inline double sample_variance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const std::vector<Eigen::Index>& rows) {
    double s = 0.0, ss = 0.0;
    for (auto r : rows) {
        s += a(r) + b(r);
        ss += a(r) * a(r) + b(r) * b(r);
    }
    const double m = 2.0 * static_cast<double>(rows.size());
    const double mean = s / m;
    return ss / m - mean * mean;
}

inline double jansen_first_order(const Eigen::VectorXd& fA, const Eigen::VectorXd& fB, const Eigen::VectorXd& fABi,
                                 const std::vector<Eigen::Index>& rows) {
    const double var = sample_variance(fA, fB, rows);
    double d = 0.0;
    for (auto r : rows) d += (fB(r) - fABi(r)) * (fB(r) - fABi(r));
    d /= 2.0 * static_cast<double>(rows.size());
    return (var - d) / var;
}

}  // namespace detail

/// First-order Sobol indices by pick-freeze with the Jansen form
///   S_i = (Var f - E[(f(B) - f(A_B^i))^2] / 2) / Var f,
/// where A_B^i is A with column i taken from B. Inputs are uniform on [0,1]^dim.
/// Confidence intervals resample the rows of (A, B) jointly.
inline SobolResult sobol_first_order(const CubeSurface& f, int dim, const std::vector<int>& inputs, int n_mc,
                                     int n_boot, std::uint64_t seed) {
    if (n_mc < 1000) throw InputError("sobol_first_order: n_mc must be >= 1000");
    if (n_boot < 0) throw InputError("sobol_first_order: n_boot must be >= 0");
    for (int i : inputs)
        if (i < 0 || i >= dim) throw InputError("sobol_first_order: input index out of range");
    Rng rng(seed, "sobol-mc");
    Eigen::MatrixXd A(n_mc, dim), B(n_mc, dim);
    for (int r = 0; r < n_mc; ++r) {
        for (int c = 0; c < dim; ++c) A(r, c) = rng.uniform();
        for (int c = 0; c < dim; ++c) B(r, c) = rng.uniform();
    }
    const Eigen::VectorXd fA = f(A), fB = f(B);
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n_mc));
    std::iota(all.begin(), all.end(), 0);

    SobolResult res;
    res.inputs = inputs;
    res.n_mc = n_mc;
    res.n_boot = n_boot;
    res.variance = detail::sample_variance(fA, fB, all);
    if (!(res.variance >= 1e-10)) throw NumericalError("sobol_first_order: constant surface (variance below 1e-10)");

    const auto q = static_cast<Eigen::Index>(inputs.size());
    res.indices.resize(q);
    res.ci_lo.resize(q);
    res.ci_hi.resize(q);
    std::vector<Eigen::VectorXd> fAB;
    for (Eigen::Index k = 0; k < q; ++k) {
        Eigen::MatrixXd ABi = A;
        ABi.col(inputs[static_cast<std::size_t>(k)]) = B.col(inputs[static_cast<std::size_t>(k)]);
        fAB.push_back(f(ABi));
        res.indices(k) = detail::jansen_first_order(fA, fB, fAB.back(), all);
    }

    Rng boot(seed, "sobol-bootstrap");
    std::vector<std::vector<double>> reps(static_cast<std::size_t>(q));
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n_mc));
    for (int b = 0; b < n_boot; ++b) {
        for (auto& r : rows) r = static_cast<Eigen::Index>(boot.below(static_cast<std::uint64_t>(n_mc)));
        for (Eigen::Index k = 0; k < q; ++k)
            reps[static_cast<std::size_t>(k)].push_back(detail::jansen_first_order(fA, fB, fAB[static_cast<std::size_t>(k)], rows));
    }
    for (Eigen::Index k = 0; k < q; ++k) {
        auto& v = reps[static_cast<std::size_t>(k)];
        double lo = res.indices(k), hi = res.indices(k);
        if (!v.empty()) {
            std::sort(v.begin(), v.end());
            auto at = [&](double p) {
                const double pos = p * static_cast<double>(v.size() - 1);
                const auto i = static_cast<std::size_t>(pos);
                const double frac = pos - static_cast<double>(i);
                return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
            };
            lo = std::min(lo, at(0.025));
            hi = std::max(hi, at(0.975));
        }
        res.ci_lo(k) = lo;
        res.ci_hi(k) = hi;
    }
    return res;
}

/// Sobol indices of an emulator p-hat over Omega x Theta (unit box). Reports the
/// theta components; with include_x the control inputs come first.
inline SobolResult sobol_emulator(const GpcModel& model, int n_mc, int n_boot, std::uint64_t seed, bool include_x = false) {
    const int d = model.dim_x(), q = model.dim_theta();
    std::vector<int> inputs;
    for (int i = include_x ? 0 : d; i < d + q; ++i) inputs.push_back(i);
    auto f = [&model](const Eigen::MatrixXd& u) { return model.predict_unit(u); };
    return sobol_first_order(f, d + q, inputs, n_mc, n_boot, seed);
}

}  // namespace l2cal

#endif
