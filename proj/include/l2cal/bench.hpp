#ifndef L2CAL_BENCH_HPP
#define L2CAL_BENCH_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "l2cal/calibrator.hpp"
#include "l2cal/gpc.hpp"
#include "l2cal/inference.hpp"
#include "l2cal/klr.hpp"
#include "l2cal/knn.hpp"
#include "l2cal/rng.hpp"

namespace l2cal {

inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

enum class Study { Study41, Study42 };

inline const char* to_string(Study s) { return s == Study::Study41 ? "study41" : "study42"; }

inline Study parse_study(const std::string& s) {
    if (s == "study41" || s == "Study41") return Study::Study41;
    if (s == "study42" || s == "Study42") return Study::Study42;
    throw InputError("unknown scenario '" + s + "' (expected study41 or study42)");
}

/// Synthetic study with analytic eta and p on unit boxes.
struct BenchScenario {
    Study study = Study::Study41;
    long n = 50;
    long N = 400;
    int replicates = 100;
    std::uint64_t seed = 1;

    static BenchScenario make(Study s, long n, long N, int replicates, std::uint64_t seed) {
        BenchScenario b{s, n, N, replicates, seed};
        b.check_truth();
        return b;
    }

    int dim_x() const { return study == Study::Study41 ? 1 : 2; }
    int dim_theta() const { return study == Study::Study41 ? 1 : 3; }
    Box omega() const { return Box::unit(dim_x(), "x"); }
    Box theta_box() const { return Box::unit(dim_theta(), "theta"); }

    Eigen::VectorXd theta_star() const {
        if (study == Study::Study41) return Eigen::VectorXd::Constant(1, 0.3);
        return Eigen::Vector3d(0.3, 0.5, 0.7);
    }

    static double eta41(double x) { return std::exp(std::exp(-0.5 * x) * std::cos(3.5 * std::numbers::pi * x)) / 3.0; }
    static double p41(double x, double t) {
        return std::exp(std::exp(-0.5 * x) * std::cos(3.5 * std::numbers::pi * x * (t + 0.7))) / 3.0;
    }
    static double eta42(double x1, double x2) {
        const double u = 2.0 * x1 - 1.0, v = 2.0 * x2 - 1.0;
        return std::exp(-4.0 * (u * u + v * v)) * u + 0.65;
    }
    static double delta42(double x1, double x2) { return 0.01 * (x1 - x2) * (x1 - x2); }
    static double p42(double x1, double x2, double t1, double t2, double t3) {
        const double s = (t1 - 0.3) * (t1 - 0.3) + (t2 - 0.5) * (t2 - 0.5) + (t3 - 0.7) * (t3 - 0.7);
        return eta42(x1, x2) + 0.35 * s + delta42(x1, x2);
    }

    /// True eta at rows of x.
    Eigen::VectorXd eta(const Eigen::MatrixXd& x) const {
        Eigen::VectorXd out(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            out(i) = study == Study::Study41 ? eta41(x(i, 0)) : eta42(x(i, 0), x(i, 1));
        return out;
    }

    /// The formula for p before clipping to [0, 1].
    double p_formula(const Eigen::VectorXd& x, const Eigen::VectorXd& t) const {
        return study == Study::Study41 ? p41(x(0), t(0)) : p42(x(0), x(1), t(0), t(1), t(2));
    }

    /// True p at rows of x, all paired with theta. The three-parameter formula
    /// exceeds 1 far from theta*, so values are clipped to [0, 1].
    Eigen::VectorXd p(const Eigen::MatrixXd& x, const Eigen::VectorXd& t) const {
        Eigen::VectorXd out(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = std::clamp(p_formula(x.row(i).transpose(), t), 0.0, 1.0);
        return out;
    }

    /// Share of a 10^4-point low-discrepancy sample of Omega x Theta where the p formula leaves [0, 1].
    double clipped_fraction() const {
        const Eigen::MatrixXd g = sobol_points(10000, dim_x() + dim_theta(), 7);
        int bad = 0;
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const double v = p_formula(g.row(i).head(dim_x()).transpose(), g.row(i).tail(dim_theta()).transpose());
            bad += (v < 0.0 || v > 1.0) ? 1 : 0;
        }
        return bad / 10000.0;
    }

    /// eta must be a probability on a 10^4-point sample of Omega.
    void check_truth() const {
        const Eigen::VectorXd e = eta(sobol_points(10000, dim_x(), 7));
        if (e.minCoeff() < 0.0 || e.maxCoeff() > 1.0) throw NumericalError(std::string(to_string(study)) + ": eta leaves [0,1]");
    }

    /// L2 objective between the true surfaces.
    L2Objective oracle_objective(Eigen::Index quad_points, std::uint64_t quad_seed, QuadRule rule = QuadRule::Sobol) const {
        return L2Objective::build([s = *this](const Eigen::MatrixXd& x) { return s.eta(x); },
                                  [s = *this](const Eigen::MatrixXd& x, const Eigen::VectorXd& t) { return s.p(x, t); },
                                  dim_x(), dim_theta(), quad_points, rule, quad_seed);
    }
};

inline std::vector<BenchScenario> table1_defaults(int replicates = 100, std::uint64_t seed = 1) {
    return {BenchScenario::make(Study::Study41, 50, 400, replicates, seed),
            BenchScenario::make(Study::Study41, 100, 900, replicates, seed)};
}

inline std::vector<BenchScenario> table2_defaults(int replicates = 100, std::uint64_t seed = 1) {
    return {BenchScenario::make(Study::Study42, 150, 500, replicates, seed),
            BenchScenario::make(Study::Study42, 250, 1500, replicates, seed)};
}

/// Equispaced x for the one-dimensional study, uniform x otherwise; y ~ Bernoulli(eta).
inline PhysicalDataset generate_physical(const BenchScenario& sc, std::uint64_t replicate_seed) {
    if (sc.n < sc.dim_x() + 1) throw InputError("generate_physical: n must be at least d + 1");
    Rng rng(replicate_seed, "physical");
    PhysicalDataset d;
    d.domain = sc.omega();
    d.x.resize(sc.n, sc.dim_x());
    if (sc.study == Study::Study41) {
        for (long i = 0; i < sc.n; ++i) d.x(i, 0) = static_cast<double>(i) / static_cast<double>(sc.n - 1);
    } else {
        for (long i = 0; i < sc.n; ++i)
            for (int j = 0; j < sc.dim_x(); ++j) d.x(i, j) = rng.uniform();
    }
    const Eigen::VectorXd e = sc.eta(d.x);
    d.y.resize(sc.n);
    for (long i = 0; i < sc.n; ++i) d.y(i) = rng.bernoulli(e(i)) ? 1.0 : 0.0;
    return d;
}

/// Uniform design over Omega x Theta; y ~ Bernoulli(p).
inline ComputerDataset generate_computer(const BenchScenario& sc, std::uint64_t replicate_seed) {
    Rng rng(replicate_seed, "computer");
    ComputerDataset d;
    d.domain_x = sc.omega();
    d.domain_theta = sc.theta_box();
    d.x.resize(sc.N, sc.dim_x());
    d.theta.resize(sc.N, sc.dim_theta());
    d.y.resize(sc.N);
    for (long i = 0; i < sc.N; ++i) {
        for (int j = 0; j < sc.dim_x(); ++j) d.x(i, j) = rng.uniform();
        for (int j = 0; j < sc.dim_theta(); ++j) d.theta(i, j) = rng.uniform();
        d.y(i) = rng.bernoulli(sc.p(d.x.row(i), d.theta.row(i).transpose())(0)) ? 1.0 : 0.0;
    }
    return d;
}

struct BenchOptions {
    int folds = 10;
    double nu = 2.5;
    std::vector<double> rho_grid = default_rho_grid();
    double lambda_decades_per_step = 1.0;
    std::vector<double> phi_grid = default_phi_grid();
    Eigen::Index quad_points = 10000;
    QuadRule rule = QuadRule::Sobol;
    int n_starts = 10;
    bool naive = false;
    int knn_k = 15;
    int naive_grid = 201;  ///< grid points per theta axis for the misclassification baseline
    int threads = 1;
};

/// One replicate of the pipeline. theta_hat is NaN when the replicate failed.
struct ReplicateRecord {
    int replicate = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string failure;
    Eigen::VectorXd theta_hat;
    double l2_distance = std::numeric_limits<double>::quiet_NaN();
    double klr_rho = 0.0, klr_lambda = 0.0, gpc_phi = 0.0;
    bool flat_flag = false;
    bool on_boundary = false;
    Eigen::VectorXd naive_theta;  ///< empty unless the baseline was run
};

struct BenchReport {
    BenchScenario scenario;
    BenchOptions options;
    std::vector<ReplicateRecord> records;
    int failures = 0;
    Eigen::VectorXd mean, sd;              ///< over successful replicates
    Eigen::VectorXd naive_mean, naive_sd;  ///< empty unless the baseline was run
    double asymptotic_var = std::numeric_limits<double>::quiet_NaN();  ///< n Var from the oracle sandwich, q = 1 only
    double ks_distance = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;  ///< wall time; printed, never written to result files
    std::vector<std::string> warnings;

    double failure_rate() const { return records.empty() ? 0.0 : static_cast<double>(failures) / records.size(); }
};

inline ReplicateRecord run_replicate(const BenchScenario& sc, const BenchOptions& opt, int r) {
    ReplicateRecord rec;
    rec.replicate = r;
    rec.seed = replicate_seed(sc.seed, static_cast<std::uint64_t>(r));
    rec.theta_hat = Eigen::VectorXd::Constant(sc.dim_theta(), std::numeric_limits<double>::quiet_NaN());
    try {
        const PhysicalDataset phys = generate_physical(sc, rec.seed);
        const ComputerDataset comp = generate_computer(sc, rec.seed);
        const auto lgrid = default_lambda_grid(sc.n, sc.dim_x(), opt.nu, opt.lambda_decades_per_step);
        const KlrTuning kt = cv_tune_klr(phys, opt.rho_grid, lgrid, opt.folds, substream_seed(rec.seed, "cv-klr"), opt.nu);
        const KlrModel klr = fit_klr(phys, kt.spec, kt.lambda);
        const GpcTuning gt = cv_tune_gpc(comp, opt.phi_grid, opt.folds, substream_seed(rec.seed, "cv-gpc"));
        const GpcModel gpc = fit_gpc(comp, gt.spec);
        rec.klr_rho = kt.spec.rho;
        rec.klr_lambda = kt.lambda;
        rec.gpc_phi = gt.spec.phi;
        if (!klr.log.converged) throw NumericalError("KLR fit did not converge");
        if (!gpc.train_log().converged) throw NumericalError("GPC fit did not converge");
        const L2Objective obj =
            L2Objective::from_models(klr, gpc, opt.quad_points, opt.rule, substream_seed(rec.seed, "quadrature"));
        CalibrateOptions co;
        co.n_starts = opt.n_starts;
        co.seed = rec.seed;
        const CalibrationResult cr = calibrate(obj, sc.theta_box(), co);
        rec.theta_hat = cr.theta_hat;
        rec.l2_distance = cr.l2_distance;
        rec.flat_flag = cr.flat_flag;
        rec.on_boundary = cr.on_boundary;
        if (opt.naive) {
            const KnnClassifier knn(comp, opt.knn_k);
            const CalibrationResult nr = calibrate_naive(
                phys, [&knn](const Eigen::MatrixXd& x, const Eigen::VectorXd& t) { return knn.predict_unit(x, t); },
                sc.theta_box(), opt.naive_grid);
            rec.naive_theta = nr.theta_hat;
        }
        rec.ok = true;
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.failure = e.what();
    }
    return rec;
}

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Sup distance between the empirical CDF of `xs` and N(mu, sigma^2).
inline double ks_normal(std::vector<double> xs, double mu, double sigma) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = normal_cdf((xs[i] - mu) / sigma);
        d = std::max({d, std::abs(F - i / n), std::abs((i + 1) / n - F)});
    }
    return d;
}

inline void mean_sd(const std::vector<Eigen::VectorXd>& rows, Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
    if (rows.empty()) return;
    const Eigen::Index q = rows.front().size();
    mean = Eigen::VectorXd::Zero(q);
    for (const auto& r : rows) mean += r;
    mean /= static_cast<double>(rows.size());
    sd = Eigen::VectorXd::Zero(q);
    for (const auto& r : rows) sd += (r - mean).cwiseAbs2();
    sd = rows.size() > 1 ? (sd / static_cast<double>(rows.size() - 1)).cwiseSqrt().eval() : Eigen::VectorXd::Zero(q);
}

}  // namespace detail

/// n Var(theta_hat) from the oracle sandwich on the true surfaces; NaN when V is singular.
inline double oracle_asymptotic_variance(const BenchScenario& sc, Eigen::Index quad_points = 10000) {
    const L2Objective obj = sc.oracle_objective(quad_points, 11);
    try {
        const AsymptoticReport r = asymptotic_report(obj, sc.theta_star(), 1, InferenceMode::Oracle, sc.theta_box());
        return sc.dim_theta() == 1 ? r.cov(0, 0) : std::numeric_limits<double>::quiet_NaN();
    } catch (const NumericalError&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

/// Runs every replicate of the scenario. Replicates are distributed over threads
/// but each owns a seed derived from (master seed, index), so the report does not
/// depend on the thread count.
inline BenchReport run_bench(const BenchScenario& sc, const BenchOptions& opt) {
    if (sc.replicates < 1) throw InputError("bench: replicates must be positive");
    const auto t0 = std::chrono::steady_clock::now();
    BenchReport rep;
    rep.scenario = sc;
    rep.options = opt;
    rep.records.resize(static_cast<std::size_t>(sc.replicates));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next++; r < sc.replicates; r = next++) rep.records[static_cast<std::size_t>(r)] = run_replicate(sc, opt, r);
    };
    const int nt = std::max(1, std::min(opt.threads, sc.replicates));
    std::vector<std::thread> pool;
    for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<Eigen::VectorXd> ok, naive;
    std::vector<double> first;
    for (const auto& r : rep.records) {
        if (!r.ok) {
            ++rep.failures;
            continue;
        }
        ok.push_back(r.theta_hat);
        first.push_back(r.theta_hat(0));
        if (r.naive_theta.size() > 0) naive.push_back(r.naive_theta);
    }
    detail::mean_sd(ok, rep.mean, rep.sd);
    detail::mean_sd(naive, rep.naive_mean, rep.naive_sd);
    if (rep.failure_rate() >= 0.05)
        rep.warnings.push_back("replicate failure rate " + std::to_string(rep.failure_rate()) + " is at least 5%");
    if (sc.dim_theta() == 1) {
        rep.asymptotic_var = oracle_asymptotic_variance(sc);
        if (std::isfinite(rep.asymptotic_var))
            rep.ks_distance = detail::ks_normal(first, sc.theta_star()(0), std::sqrt(rep.asymptotic_var / sc.n));
    }
    if (const double c = sc.clipped_fraction(); c > 0.0)
        rep.warnings.push_back("p formula clipped to [0,1] on " + fmt_double(100.0 * c) + "% of Omega x Theta");
    if (opt.naive) rep.warnings.push_back("naive baseline uses a " + std::to_string(opt.knn_k) + "-nearest-neighbour classifier");
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

inline BenchReport run_table1(long n, long N, int replicates, std::uint64_t seed, BenchOptions opt = {}) {
    return run_bench(BenchScenario::make(Study::Study41, n, N, replicates, seed), opt);
}

inline BenchReport run_table2(long n, long N, int replicates, std::uint64_t seed, BenchOptions opt = {}) {
    return run_bench(BenchScenario::make(Study::Study42, n, N, replicates, seed), opt);
}

inline BenchReport run_naive_comparison(long n, long N, int replicates, std::uint64_t seed, BenchOptions opt = {}) {
    opt.naive = true;
    return run_bench(BenchScenario::make(Study::Study41, n, N, replicates, seed), opt);
}

/// Gaussian kernel density estimate with Silverman's bandwidth.
inline double kde(const std::vector<double>& xs, double t) {
    const double n = static_cast<double>(xs.size());
    if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double m = 0.0, s = 0.0;
    for (double x : xs) m += x;
    m /= n;
    for (double x : xs) s += (x - m) * (x - m);
    s = std::sqrt(s / (n - 1.0));
    const double h = 1.06 * std::max(s, 1e-12) * std::pow(n, -0.2);
    double acc = 0.0;
    for (double x : xs) acc += std::exp(-0.5 * (t - x) * (t - x) / (h * h));
    return acc / (n * h * std::sqrt(2.0 * std::numbers::pi));
}

inline constexpr const char* kBenchFormat = "l2cal-bench/1";

/// replicates.csv, summary.csv and density.csv under `dir` (which must exist).
inline void write_bench_files(const BenchReport& rep, const std::string& dir, const std::string& config_hash = "") {
    const auto& sc = rep.scenario;
    const int q = sc.dim_theta();
    auto open = [&](const std::string& name) {
        std::ofstream f(dir + "/" + name);
        if (!f) throw InputError("cannot write " + dir + "/" + name);
        f << "# " << kBenchFormat << " scenario=" << to_string(sc.study) << " n=" << sc.n << " N=" << sc.N
          << " replicates=" << sc.replicates << " seed=" << sc.seed;
        if (!config_hash.empty()) f << " config_hash=" << config_hash;
        if (rep.options.naive) f << " naive_classifier=knn" << rep.options.knn_k;
        f << "\n";
        return f;
    };
    {
        auto f = open("replicates.csv");
        f << "replicate,seed,ok";
        for (int j = 0; j < q; ++j) f << ",theta" << j + 1;
        f << ",l2_distance,klr_rho,klr_lambda,gpc_phi,flat_flag,on_boundary";
        if (rep.options.naive)
            for (int j = 0; j < q; ++j) f << ",naive_theta" << j + 1;
        f << ",failure\n";
        for (const auto& r : rep.records) {
            f << r.replicate << "," << r.seed << "," << (r.ok ? 1 : 0);
            for (int j = 0; j < q; ++j) f << "," << fmt_double(r.theta_hat(j));
            f << "," << fmt_double(r.l2_distance) << "," << fmt_double(r.klr_rho) << "," << fmt_double(r.klr_lambda) << ","
              << fmt_double(r.gpc_phi) << "," << (r.flat_flag ? 1 : 0) << "," << (r.on_boundary ? 1 : 0);
            if (rep.options.naive)
                for (int j = 0; j < q; ++j) f << "," << (r.naive_theta.size() ? fmt_double(r.naive_theta(j)) : "nan");
            std::string msg = r.failure;
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            f << "," << msg << "\n";
        }
    }
    {
        auto f = open("summary.csv");
        f << "method,component,theta_star,mean,sd,successes,failures\n";
        const long succ = static_cast<long>(rep.records.size()) - rep.failures;
        for (int j = 0; j < q; ++j) {
            f << "l2," << j + 1 << "," << fmt_double(sc.theta_star()(j)) << ","
              << fmt_double(rep.mean.size() ? rep.mean(j) : NAN) << "," << fmt_double(rep.sd.size() ? rep.sd(j) : NAN) << ","
              << succ << "," << rep.failures << "\n";
        }
        if (rep.options.naive) {
            for (int j = 0; j < q; ++j) {
                f << "naive," << j + 1 << "," << fmt_double(sc.theta_star()(j)) << ","
                  << fmt_double(rep.naive_mean.size() ? rep.naive_mean(j) : NAN) << ","
                  << fmt_double(rep.naive_sd.size() ? rep.naive_sd(j) : NAN) << "," << succ << "," << rep.failures << "\n";
            }
        }
        if (q == 1) {
            f << "asymptotic,1," << fmt_double(sc.theta_star()(0)) << "," << fmt_double(sc.theta_star()(0)) << ","
              << fmt_double(std::sqrt(rep.asymptotic_var / sc.n)) << ",,\n";
            f << "# ks_distance=" << fmt_double(rep.ks_distance) << "\n";
        }
    }
    {
        auto f = open("density.csv");
        f << "component,theta,empirical,asymptotic\n";
        for (int j = 0; j < q; ++j) {
            std::vector<double> xs;
            for (const auto& r : rep.records)
                if (r.ok) xs.push_back(r.theta_hat(j));
            const double mu = sc.theta_star()(j);
            const double s = q == 1 ? std::sqrt(rep.asymptotic_var / sc.n) : NAN;
            for (int k = 0; k <= 200; ++k) {
                const double t = k / 200.0;
                const double a = std::isfinite(s) ? std::exp(-0.5 * (t - mu) * (t - mu) / (s * s)) / (s * std::sqrt(2.0 * std::numbers::pi)) : NAN;
                f << j + 1 << "," << fmt_double(t) << "," << fmt_double(kde(xs, t)) << "," << fmt_double(a) << "\n";
            }
        }
    }
}

}  // namespace l2cal

#endif
