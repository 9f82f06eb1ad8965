#ifndef L2CAL_KNN_HPP
#define L2CAL_KNN_HPP

#include <algorithm>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "l2cal/error.hpp"
#include "l2cal/gpc.hpp"

namespace l2cal {

/// Majority vote of the k nearest training rows in unit (x, theta) coordinates.
/// Equal distances are ordered by row index, so the vote is deterministic.
class KnnClassifier {
public:
    KnnClassifier(const ComputerDataset& data, int k = 15) : points_(data.joint_unit()), y_(data.y), k_(k) {
        if (k < 1) throw InputError("knn: k must be positive");
        if (k > points_.rows()) throw InputError("knn: k exceeds the number of training rows");
    }

    int k() const { return k_; }

    /// Predicted labels at unit joint points.
    Eigen::VectorXd predict_unit(const Eigen::MatrixXd& z) const {
        if (z.cols() != points_.cols()) throw InputError("knn: dimension mismatch");
        const Eigen::Index n = points_.rows();
        Eigen::VectorXd out(z.rows());
        std::vector<double> d(static_cast<std::size_t>(n));
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
            for (Eigen::Index i = 0; i < n; ++i) d[static_cast<std::size_t>(i)] = (points_.row(i) - z.row(r)).squaredNorm();
            std::iota(order.begin(), order.end(), 0);
            std::partial_sort(order.begin(), order.begin() + k_, order.end(), [&](Eigen::Index a, Eigen::Index b) {
                const double da = d[static_cast<std::size_t>(a)], db = d[static_cast<std::size_t>(b)];
                return da < db || (da == db && a < b);
            });
            int ones = 0;
            for (int j = 0; j < k_; ++j) ones += y_(order[static_cast<std::size_t>(j)]) > 0.5 ? 1 : 0;
            out(r) = 2 * ones > k_ ? 1.0 : 0.0;
        }
        return out;
    }

    /// Every x row paired with one theta.
    Eigen::VectorXd predict_unit(const Eigen::MatrixXd& x_unit, const Eigen::VectorXd& theta_unit) const {
        Eigen::MatrixXd z(x_unit.rows(), x_unit.cols() + theta_unit.size());
        z.leftCols(x_unit.cols()) = x_unit;
        z.rightCols(theta_unit.size()) = theta_unit.transpose().replicate(x_unit.rows(), 1);
        return predict_unit(z);
    }

private:
    Eigen::MatrixXd points_;
    Eigen::VectorXd y_;
    int k_;
};

}  // namespace l2cal

#endif
