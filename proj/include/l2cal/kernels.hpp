#ifndef L2CAL_KERNELS_HPP
#define L2CAL_KERNELS_HPP

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "l2cal/error.hpp"

namespace l2cal {

enum class KernelFamily { Matern, Rbf };

inline const char* to_string(KernelFamily f) { return f == KernelFamily::Matern ? "matern" : "rbf"; }

/// Stationary isotropic kernel with unit value at zero distance.
///
/// Matern:  Phi(r) = 2^(1-nu)/Gamma(nu) * s^nu * K_nu(s),  s = 2 sqrt(nu) r / rho
/// RBF:     Phi(r) = exp(-phi r^2)
///
/// With this scaling nu = 5/2 reduces to (1 + s + s^2/3) exp(-s) and
/// nu = 3/2 to (1 + s) exp(-s).
struct KernelSpec {
    KernelFamily family = KernelFamily::Matern;
    double nu = 2.5;
    double rho = 1.0;
    double phi = 1.0;

    static KernelSpec matern(double nu, double rho) {
        KernelSpec k{KernelFamily::Matern, nu, rho, 1.0};
        k.validate();
        return k;
    }

    static KernelSpec rbf(double phi) {
        KernelSpec k{KernelFamily::Rbf, 2.5, 1.0, phi};
        k.validate();
        return k;
    }

    void validate() const {
        if (family == KernelFamily::Matern) {
            if (!(std::isfinite(nu) && nu >= 1.0)) throw InputError("Matern kernel needs nu >= 1");
            if (!(std::isfinite(rho) && rho > 0.0)) throw InputError("Matern kernel needs rho > 0");
        } else {
            if (!(std::isfinite(phi) && phi > 0.0)) throw InputError("RBF kernel needs phi > 0");
        }
    }

    bool operator==(const KernelSpec&) const = default;
};

namespace detail {

inline double matern_bessel(double nu, double s) {
    if (s < 1e-8) return 1.0;
    const double v = std::exp((1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(s)) *
                     std::cyl_bessel_k(nu, s);
    return std::isfinite(v) ? v : 0.0;
}

}  // namespace detail

/// Kernel value as a function of squared Euclidean distance.
inline double kernel_from_sqdist(const KernelSpec& spec, double d2) {
    if (spec.family == KernelFamily::Rbf) return std::exp(-spec.phi * d2);
    const double s = 2.0 * std::sqrt(spec.nu) * std::sqrt(d2) / spec.rho;
    if (spec.nu == 2.5) return (1.0 + s + s * s / 3.0) * std::exp(-s);
    if (spec.nu == 1.5) return (1.0 + s) * std::exp(-s);
    return detail::matern_bessel(spec.nu, s);
}

template <class A, class B>
double eval_kernel(const KernelSpec& spec, const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    if (a.size() != b.size()) {
        throw InputError("eval_kernel: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    }
    double d2 = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double t = a(i) - b(i);
        d2 += t * t;
    }
    return kernel_from_sqdist(spec, d2);
}

/// Cross-kernel matrix K(i, j) = Phi(a_i, b_j); rows are points.
inline Eigen::MatrixXd cross_gram(const KernelSpec& spec, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.cols() != b.cols()) throw InputError("cross_gram: dimension mismatch");
    Eigen::MatrixXd k(a.rows(), b.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            double d2 = 0.0;
            for (Eigen::Index c = 0; c < a.cols(); ++c) {
                const double t = a(i, c) - b(j, c);
                d2 += t * t;
            }
            k(i, j) = kernel_from_sqdist(spec, d2);
        }
    }
    return k;
}

struct GramMatrix {
    Eigen::MatrixXd entries;
    double jitter = 0.0;
};

/// entries(i,j) = Phi(p_i, p_j) + jitter * [i == j]. Exactly symmetric.
inline GramMatrix gram(const KernelSpec& spec, const Eigen::MatrixXd& points, double jitter = 0.0) {
    spec.validate();
    if (points.rows() == 0) throw InputError("gram: empty point set");
    if (!points.allFinite()) throw InputError("gram: non-finite coordinates");
    if (jitter < 0.0) throw InputError("gram: negative jitter");
    const Eigen::Index n = points.rows();
    GramMatrix g{Eigen::MatrixXd(n, n), jitter};
    for (Eigen::Index j = 0; j < n; ++j) {
        g.entries(j, j) = 1.0 + jitter;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            double d2 = 0.0;
            for (Eigen::Index c = 0; c < points.cols(); ++c) {
                const double t = points(i, c) - points(j, c);
                d2 += t * t;
            }
            const double v = kernel_from_sqdist(spec, d2);
            g.entries(i, j) = v;
            g.entries(j, i) = v;
        }
    }
    return g;
}

inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-4;

/// Cholesky factor of the Gram matrix. If the factorization fails, diagonal
/// jitter escalates from 1e-10 by factors of 10 up to 1e-4; the jitter that
/// succeeded is written back into `g`.
inline Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(GramMatrix& g) {
    Eigen::LLT<Eigen::MatrixXd> llt(g.entries);
    if (llt.info() == Eigen::Success) return llt;
    const Eigen::MatrixXd base = g.entries - g.jitter * Eigen::MatrixXd::Identity(g.entries.rows(), g.entries.cols());
    double tried = g.jitter;
    for (double j = std::max(kJitterStart, g.jitter * 10.0); j <= kJitterMax * (1.0 + 1e-9); j *= 10.0) {
        tried = j;
        Eigen::MatrixXd m = base;
        m.diagonal().array() += j;
        llt.compute(m);
        if (llt.info() == Eigen::Success) {
            g.entries = std::move(m);
            g.jitter = j;
            return llt;
        }
    }
    throw NumericalError("Cholesky factorization failed after jitter escalation", tried);
}

}  // namespace l2cal

#endif
