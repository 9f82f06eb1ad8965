#ifndef L2CAL_BOX_HPP
#define L2CAL_BOX_HPP

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "l2cal/error.hpp"

namespace l2cal {

/// One input coordinate of Omega or Theta, in physical units.
struct Coordinate {
    std::string name;
    double lo = 0.0;
    double hi = 1.0;
    /// Map through log10 before the affine map to [0, 1]; for multi-decade ranges.
    bool log_scale = false;
    std::string units;
};

/// Axis-aligned box with the affine (optionally log-affine) map onto [0, 1]^k.
/// Every kernel computation happens in the unit coordinates produced here.
class Box {
public:
    Box() = default;
    explicit Box(std::vector<Coordinate> coords) : coords_(std::move(coords)) { validate(); }

    /// Unit box [0,1]^k with generated names prefix0, prefix1, ...
    static Box unit(int k, const std::string& prefix = "x") {
        std::vector<Coordinate> c;
        for (int i = 0; i < k; ++i) c.push_back({prefix + std::to_string(i), 0.0, 1.0, false, ""});
        return Box(std::move(c));
    }

    int dim() const { return static_cast<int>(coords_.size()); }
    const std::vector<Coordinate>& coords() const { return coords_; }
    const Coordinate& operator[](int i) const { return coords_[static_cast<std::size_t>(i)]; }

    void validate() const {
        for (const auto& c : coords_) {
            if (!(std::isfinite(c.lo) && std::isfinite(c.hi)) || !(c.lo < c.hi)) {
                throw InputError("coordinate '" + c.name + "': need finite lo < hi");
            }
            if (c.log_scale && !(c.lo > 0.0)) {
                throw InputError("coordinate '" + c.name + "': log scaling needs lo > 0");
            }
        }
    }

    double to_unit(int i, double v) const {
        const auto& c = (*this)[i];
        if (c.log_scale) {
            return (std::log10(v) - std::log10(c.lo)) / (std::log10(c.hi) - std::log10(c.lo));
        }
        return (v - c.lo) / (c.hi - c.lo);
    }

    double from_unit(int i, double u) const {
        const auto& c = (*this)[i];
        if (c.log_scale) {
            const double l = std::log10(c.lo) + u * (std::log10(c.hi) - std::log10(c.lo));
            return std::pow(10.0, l);
        }
        return c.lo + u * (c.hi - c.lo);
    }

    /// d(physical)/d(unit) at unit coordinate u.
    double jacobian(int i, double u) const {
        const auto& c = (*this)[i];
        if (c.log_scale) {
            const double span = std::log10(c.hi) - std::log10(c.lo);
            return from_unit(i, u) * std::log(10.0) * span;
        }
        return c.hi - c.lo;
    }

    /// Rows are points.
    Eigen::MatrixXd to_unit(const Eigen::MatrixXd& pts) const {
        check_cols(pts.cols());
        Eigen::MatrixXd out(pts.rows(), pts.cols());
        for (Eigen::Index r = 0; r < pts.rows(); ++r)
            for (int j = 0; j < dim(); ++j) out(r, j) = to_unit(j, pts(r, j));
        return out;
    }

    Eigen::MatrixXd from_unit(const Eigen::MatrixXd& pts) const {
        check_cols(pts.cols());
        Eigen::MatrixXd out(pts.rows(), pts.cols());
        for (Eigen::Index r = 0; r < pts.rows(); ++r)
            for (int j = 0; j < dim(); ++j) out(r, j) = from_unit(j, pts(r, j));
        return out;
    }

    Eigen::VectorXd to_unit(const Eigen::VectorXd& v) const {
        check_cols(v.size());
        Eigen::VectorXd out(v.size());
        for (int j = 0; j < dim(); ++j) out(j) = to_unit(j, v(j));
        return out;
    }

    Eigen::VectorXd from_unit(const Eigen::VectorXd& v) const {
        check_cols(v.size());
        Eigen::VectorXd out(v.size());
        for (int j = 0; j < dim(); ++j) out(j) = from_unit(j, v(j));
        return out;
    }

    bool contains(int i, double v, double rel_tol = 1e-12) const {
        const auto& c = (*this)[i];
        const double slack = rel_tol * (c.hi - c.lo);
        return v >= c.lo - slack && v <= c.hi + slack;
    }

    /// Indices of rows falling outside the box.
    std::vector<Eigen::Index> offending_rows(const Eigen::MatrixXd& pts) const {
        check_cols(pts.cols());
        std::vector<Eigen::Index> bad;
        for (Eigen::Index r = 0; r < pts.rows(); ++r) {
            for (int j = 0; j < dim(); ++j) {
                if (!std::isfinite(pts(r, j)) || !contains(j, pts(r, j))) {
                    bad.push_back(r);
                    break;
                }
            }
        }
        return bad;
    }

private:
    void check_cols(Eigen::Index k) const {
        if (k != dim()) {
            throw InputError("dimension mismatch: box has " + std::to_string(dim()) +
                             " coordinates, got " + std::to_string(k));
        }
    }

    std::vector<Coordinate> coords_;
};

inline std::string format_rows(const std::vector<Eigen::Index>& rows, std::size_t limit = 20) {
    std::string s;
    for (std::size_t i = 0; i < rows.size() && i < limit; ++i) {
        if (i) s += ", ";
        s += std::to_string(rows[i]);
    }
    if (rows.size() > limit) s += ", ...";
    return s;
}

}  // namespace l2cal

#endif
