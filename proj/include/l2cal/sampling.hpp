#ifndef L2CAL_SAMPLING_HPP
#define L2CAL_SAMPLING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <boost/random/sobol.hpp>
#include <Eigen/Dense>

#include "l2cal/error.hpp"
#include "l2cal/rng.hpp"

namespace l2cal {

enum class QuadRule { MonteCarlo, Sobol };

inline const char* to_string(QuadRule r) { return r == QuadRule::Sobol ? "sobol" : "monte_carlo"; }

/// Sobol points in [0,1)^dim with a seeded random digital shift (each
/// coordinate's 64-bit integer is XORed with a per-dimension random mask).
inline Eigen::MatrixXd sobol_points(Eigen::Index count, int dim, std::uint64_t seed) {
    if (dim < 1) throw InputError("sobol_points: dim must be >= 1");
    boost::random::sobol engine(static_cast<std::size_t>(dim));
    Rng rng(seed, "sobol-shift");
    std::vector<std::uint64_t> mask(static_cast<std::size_t>(dim));
    for (auto& m : mask) m = rng.next();
    Eigen::MatrixXd pts(count, dim);
    for (Eigen::Index i = 0; i < count; ++i) {
        for (int j = 0; j < dim; ++j) {
            const std::uint64_t v = static_cast<std::uint64_t>(engine()) ^ mask[static_cast<std::size_t>(j)];
            pts(i, j) = static_cast<double>(v >> 11) * 0x1.0p-53;
        }
    }
    return pts;
}

inline Eigen::MatrixXd uniform_points(Eigen::Index count, int dim, std::uint64_t seed) {
    Rng rng(seed, "uniform-points");
    Eigen::MatrixXd pts(count, dim);
    for (Eigen::Index i = 0; i < count; ++i)
        for (int j = 0; j < dim; ++j) pts(i, j) = rng.uniform();
    return pts;
}

inline Eigen::MatrixXd quadrature_nodes(QuadRule rule, Eigen::Index count, int dim, std::uint64_t seed) {
    if (count < 1) throw InputError("quadrature needs at least one node");
    return rule == QuadRule::Sobol ? sobol_points(count, dim, seed) : uniform_points(count, dim, seed);
}

/// Latin hypercube sample in [0,1]^dim: one point per stratum per axis,
/// jittered uniformly inside its stratum.
inline Eigen::MatrixXd latin_hypercube(int count, int dim, std::uint64_t seed) {
    Rng rng(seed, "lhs");
    Eigen::MatrixXd pts(count, dim);
    std::vector<int> perm(static_cast<std::size_t>(count));
    for (int j = 0; j < dim; ++j) {
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm.begin(), perm.end());
        for (int i = 0; i < count; ++i) {
            pts(i, j) = (perm[static_cast<std::size_t>(i)] + rng.uniform()) / count;
        }
    }
    return pts;
}

/// Stratified k-fold assignment for 0/1 labels: each class is shuffled and
/// dealt round-robin, continuing the fold counter across classes.
inline std::vector<int> stratified_folds(const Eigen::VectorXd& y, int folds, std::uint64_t seed) {
    if (folds < 2) throw InputError("cross-validation needs at least 2 folds");
    Rng rng(seed, "folds");
    std::vector<int> assign(static_cast<std::size_t>(y.size()), 0);
    int next = 0;
    for (int label = 0; label <= 1; ++label) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < y.size(); ++i)
            if (static_cast<int>(y(i)) == label) idx.push_back(i);
        rng.shuffle(idx.begin(), idx.end());
        for (auto i : idx) {
            assign[static_cast<std::size_t>(i)] = next;
            next = (next + 1) % folds;
        }
    }
    return assign;
}

inline std::vector<Eigen::Index> fold_members(const std::vector<int>& assign, int fold, bool in_fold) {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < assign.size(); ++i)
        if ((assign[i] == fold) == in_fold) out.push_back(static_cast<Eigen::Index>(i));
    return out;
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
    return out;
}

inline Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Eigen::Index>(r)) = v(rows[r]);
    return out;
}

/// Mean Bernoulli negative log-likelihood with probabilities clipped to [1e-12, 1 - 1e-12].
inline double log_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& p) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double q = std::clamp(p(i), 1e-12, 1.0 - 1e-12);
        s -= y(i) > 0.5 ? std::log(q) : std::log1p(-q);
    }
    return s / static_cast<double>(y.size());
}

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace l2cal

#endif
