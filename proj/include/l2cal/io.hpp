#ifndef L2CAL_IO_HPP
#define L2CAL_IO_HPP

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "l2cal/box.hpp"
#include "l2cal/calibrator.hpp"
#include "l2cal/error.hpp"
#include "l2cal/gpc.hpp"
#include "l2cal/inference.hpp"
#include "l2cal/klr.hpp"
#include "l2cal/rng.hpp"
#include "l2cal/sensitivity.hpp"

namespace l2cal {

using json = nlohmann::json;

inline constexpr const char* kModelFormat = "l2cal-model/1";
inline constexpr const char* kResultFormat = "l2cal-result/1";
inline constexpr const char* kConfigFormat = "l2cal-config/1";
inline constexpr const char* kCsvFormat = "l2cal-csv/1";

// ---------------------------------------------------------------- CSV

/// Numeric table with a header row.
struct Table {
    std::vector<std::string> header;
    Eigen::MatrixXd values;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
        throw InputError(where + ": '" + s + "' is not a finite number");
    return v;
}

}  // namespace detail

/// Reads a comma-separated numeric table. Lines starting with '#' and blank
/// lines are skipped. Errors carry the 1-based line number.
inline Table read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    Table t;
    std::vector<std::vector<double>> rows;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = detail::split_csv_line(line);
        if (t.header.empty()) {
            t.header = cells;
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw InputError(path + " line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                             " fields, found " + std::to_string(cells.size()));
        }
        std::vector<double> r;
        for (std::size_t j = 0; j < cells.size(); ++j)
            r.push_back(detail::parse_double(cells[j], path + " line " + std::to_string(lineno) + " column '" + t.header[j] + "'"));
        rows.push_back(std::move(r));
    }
    if (t.header.empty()) throw InputError(path + ": missing header row");
    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < t.header.size(); ++j) t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return t;
}

inline std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_csv(const std::string& path, const Table& t, const std::string& comment = "") {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    if (!comment.empty()) out << "# " << comment << "\n";
    for (std::size_t j = 0; j < t.header.size(); ++j) out << (j ? "," : "") << t.header[j];
    out << "\n";
    for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.values.cols(); ++j) out << (j ? "," : "") << format_number(t.values(i, j));
        out << "\n";
    }
}

namespace detail {

inline std::vector<std::string> names_of(const Box& b) {
    std::vector<std::string> n;
    for (const auto& c : b.coords()) n.push_back(c.name);
    return n;
}

inline void expect_header(const Table& t, const std::vector<std::string>& want, const std::string& path) {
    if (t.header != want) {
        std::string w;
        for (const auto& s : want) w += (w.empty() ? "" : ",") + s;
        throw InputError(path + ": header must be '" + w + "'");
    }
}

inline Eigen::VectorXd label_column(const Table& t, const std::string& path) {
    const Eigen::VectorXd y = t.values.col(t.values.cols() - 1);
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y(i) != 0.0 && y(i) != 1.0)
            throw InputError(path + ": data row " + std::to_string(i + 1) + " has label " + format_number(y(i)) + ", expected 0 or 1");
    return y;
}

}  // namespace detail

/// Physical CSV: one column per control input (named as in the domain), then y.
inline PhysicalDataset read_physical_csv(const std::string& path, const Box& omega) {
    const Table t = read_csv(path);
    auto want = detail::names_of(omega);
    want.push_back("y");
    detail::expect_header(t, want, path);
    PhysicalDataset d;
    d.domain = omega;
    d.x = t.values.leftCols(omega.dim());
    d.y = detail::label_column(t, path);
    d.validate();
    return d;
}

/// Computer CSV: control inputs, calibration parameters, then y.
inline ComputerDataset read_computer_csv(const std::string& path, const Box& omega, const Box& theta) {
    const Table t = read_csv(path);
    auto want = detail::names_of(omega);
    for (const auto& n : detail::names_of(theta)) want.push_back(n);
    want.push_back("y");
    detail::expect_header(t, want, path);
    ComputerDataset d;
    d.domain_x = omega;
    d.domain_theta = theta;
    d.x = t.values.leftCols(omega.dim());
    d.theta = t.values.middleCols(omega.dim(), theta.dim());
    d.y = detail::label_column(t, path);
    d.validate();
    if (d.size() <= 0) throw InputError(path + ": no data rows");
    return d;
}

inline void write_physical_csv(const std::string& path, const PhysicalDataset& d) {
    Table t;
    t.header = detail::names_of(d.domain);
    t.header.push_back("y");
    t.values.resize(d.x.rows(), d.x.cols() + 1);
    t.values << d.x, d.y;
    write_csv(path, t);
}

inline void write_computer_csv(const std::string& path, const ComputerDataset& d) {
    Table t;
    t.header = detail::names_of(d.domain_x);
    for (const auto& n : detail::names_of(d.domain_theta)) t.header.push_back(n);
    t.header.push_back("y");
    t.values.resize(d.x.rows(), d.x.cols() + d.theta.cols() + 1);
    t.values << d.x, d.theta, d.y;
    write_csv(path, t);
}

// ---------------------------------------------------------------- JSON helpers

inline json to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline json to_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        a.push_back(std::move(r));
    }
    return a;
}

/// JSON has no NaN; non-finite values become null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline Eigen::VectorXd vector_from_json(const json& j, const std::string& what) {
    if (!j.is_array()) throw InputError(what + ": expected an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw InputError(what + ": expected numbers");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_array()) throw InputError(what + ": expected an array of rows");
    if (j.empty()) return {};
    const std::size_t cols = j[0].size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != cols) throw InputError(what + ": ragged rows");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[i][c].is_number()) throw InputError(what + ": expected numbers");
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
        }
    }
    return m;
}

inline json to_json(const KernelSpec& k) {
    if (k.family == KernelFamily::Rbf) return {{"family", "rbf"}, {"phi", k.phi}};
    return {{"family", "matern"}, {"nu", k.nu}, {"rho", k.rho}};
}

inline KernelSpec kernel_from_json(const json& j) {
    const std::string f = j.at("family").get<std::string>();
    if (f == "rbf") return KernelSpec::rbf(j.at("phi").get<double>());
    if (f == "matern") return KernelSpec::matern(j.at("nu").get<double>(), j.at("rho").get<double>());
    throw InputError("unknown kernel family '" + f + "'");
}

inline json to_json(const Box& b) {
    json a = json::array();
    for (const auto& c : b.coords())
        a.push_back({{"name", c.name}, {"lo", c.lo}, {"hi", c.hi}, {"log", c.log_scale}, {"units", c.units}});
    return a;
}

inline Box box_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw InputError(what + ": expected a non-empty array of coordinates");
    std::vector<Coordinate> cs;
    for (const auto& e : j) {
        if (!e.is_object()) throw InputError(what + ": each coordinate must be an object");
        for (auto it = e.begin(); it != e.end(); ++it)
            if (it.key() != "name" && it.key() != "lo" && it.key() != "hi" && it.key() != "log" && it.key() != "units")
                throw InputError(what + ": unknown coordinate field '" + it.key() + "'");
        Coordinate c;
        c.name = e.at("name").get<std::string>();
        c.lo = e.at("lo").get<double>();
        c.hi = e.at("hi").get<double>();
        c.log_scale = e.value("log", false);
        c.units = e.value("units", std::string());
        if (c.name.empty() || c.name == "y" || c.name.find(',') != std::string::npos)
            throw InputError(what + ": invalid coordinate name '" + c.name + "'");
        cs.push_back(std::move(c));
    }
    return Box(std::move(cs));
}

// ---------------------------------------------------------------- model artifacts

inline json to_json(const KlrModel& m) {
    return {{"format", kModelFormat},
            {"kind", "klr"},
            {"kernel", to_json(m.spec)},
            {"domain", to_json(m.domain)},
            {"centers", to_json(m.centers)},
            {"a", to_json(m.a)},
            {"b", m.b},
            {"lambda", m.lambda},
            {"train_log",
             {{"iterations", m.log.iterations},
              {"objective", m.log.objective},
              {"gradient_norm", m.log.gradient_norm},
              {"converged", m.log.converged}}},
            {"warnings", m.warnings}};
}

inline void check_format(const json& j, const std::string& kind, const std::string& path) {
    if (!j.is_object() || j.value("format", "") != kModelFormat)
        throw InputError(path + ": not an " + std::string(kModelFormat) + " artifact");
    if (j.value("kind", "") != kind) throw InputError(path + ": expected a '" + kind + "' model, found '" + j.value("kind", "") + "'");
}

inline KlrModel klr_from_json(const json& j, const std::string& path = "model") {
    check_format(j, "klr", path);
    KlrModel m;
    m.spec = kernel_from_json(j.at("kernel"));
    m.domain = box_from_json(j.at("domain"), path + " domain");
    m.centers = matrix_from_json(j.at("centers"), path + " centers");
    m.a = vector_from_json(j.at("a"), path + " a");
    m.b = j.at("b").get<double>();
    m.lambda = j.at("lambda").get<double>();
    const auto& lg = j.at("train_log");
    m.log.iterations = lg.value("iterations", 0);
    m.log.objective = lg.value("objective", 0.0);
    m.log.gradient_norm = lg.value("gradient_norm", 0.0);
    m.log.converged = lg.value("converged", false);
    m.warnings = j.value("warnings", std::vector<std::string>{});
    if (m.centers.rows() != m.a.size() || m.centers.cols() != m.domain.dim())
        throw InputError(path + ": inconsistent KLR artifact sizes");
    m.fitted_latent = m.latent_unit(m.centers);
    return m;
}

inline json to_json(const GpcModel& m) {
    const auto& lg = m.train_log();
    return {{"format", kModelFormat},
            {"kind", "gpc"},
            {"kernel", to_json(m.spec())},
            {"domain_x", to_json(m.domain_x())},
            {"domain_theta", to_json(m.domain_theta())},
            {"train_points", to_json(m.train_points())},
            {"labels", to_json(m.labels())},
            {"f_hat", to_json(m.f_hat())},
            {"train_log",
             {{"iterations", lg.iterations}, {"objective", lg.objective}, {"residual", lg.residual}, {"converged", lg.converged}}}};
}

/// Rebuilds the prediction factors from the stored mode.
inline GpcModel gpc_from_json(const json& j, const std::string& path = "model") {
    check_format(j, "gpc", path);
    GpcTrainLog lg;
    const auto& jl = j.at("train_log");
    lg.iterations = jl.value("iterations", 0);
    lg.objective = jl.value("objective", 0.0);
    lg.residual = jl.value("residual", 0.0);
    lg.converged = jl.value("converged", false);
    Box dx = box_from_json(j.at("domain_x"), path + " domain_x");
    Box dt = box_from_json(j.at("domain_theta"), path + " domain_theta");
    Eigen::MatrixXd pts = matrix_from_json(j.at("train_points"), path + " train_points");
    if (pts.cols() != dx.dim() + dt.dim()) throw InputError(path + ": train_points width does not match the domains");
    return GpcModel(kernel_from_json(j.at("kernel")), std::move(dx), std::move(dt), std::move(pts),
                    vector_from_json(j.at("labels"), path + " labels"), vector_from_json(j.at("f_hat"), path + " f_hat"), lg);
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path + ": invalid JSON: " + e.what());
    }
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------- run configuration

struct RunConfig {
    Box controls;
    Box parameters;
    std::string physical_data;   ///< resolved paths; empty when absent
    std::string computer_data;
    std::string physical_model;
    std::string emulator_model;
    double nu = 2.5;
    std::vector<double> rho_grid = default_rho_grid();
    std::vector<double> lambda_grid;  ///< empty: centred on the rate heuristic
    double lambda_decades_per_step = 1.0;
    std::vector<double> phi_grid = default_phi_grid();
    int folds = 10;
    Eigen::Index quad_points = 10000;
    QuadRule quad_rule = QuadRule::Sobol;
    int starts = 10;
    InferenceMode inference = InferenceMode::Plugin;
    int sobol_n_mc = 10000;
    int sobol_n_boot = 200;
    bool sobol_include_x = false;
    std::string bench_scenario = "study41";
    long bench_n = 50;
    long bench_N = 400;
    int bench_replicates = 100;
    bool bench_naive = false;
    int bench_naive_grid = 201;
    json raw;  ///< the parsed document, for hashing
};

/// FNV-1a of the canonical (sorted-key, compact) dump, as 16 hex digits.
inline std::string config_hash(const json& j) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(j.dump());
    return os.str();
}

namespace detail {

inline void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw InputError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : keys) ok = ok || it.key() == k;
        if (!ok) throw InputError(where + ": unknown key '" + it.key() + "'");
    }
}

inline std::vector<double> positive_grid(const json& j, const std::string& what) {
    const Eigen::VectorXd v = vector_from_json(j, what);
    if (v.size() == 0) throw InputError(what + ": grid must not be empty");
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!(v(i) > 0.0)) throw InputError(what + ": grid values must be positive");
    return {v.data(), v.data() + v.size()};
}

template <class T>
T get_checked(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError(where + "." + key + ": wrong type");
    }
}

}  // namespace detail

/// Parses a configuration document. Relative file paths resolve against `base_dir`.
inline RunConfig parse_config(const json& j, const std::string& base_dir = ".") {
    using detail::get_checked;
    detail::allow_keys(j, {"format", "controls", "parameters", "files", "klr", "gpc", "cv_folds", "quadrature", "calibration",
                           "sobol", "bench"},
                       "config");
    if (j.contains("format") && j.at("format") != kConfigFormat)
        throw InputError("config: unsupported format '" + j.at("format").dump() + "'");
    RunConfig c;
    c.raw = j;
    if (j.contains("controls")) c.controls = box_from_json(j.at("controls"), "config.controls");
    if (j.contains("parameters")) c.parameters = box_from_json(j.at("parameters"), "config.parameters");
    auto resolve = [&](const std::string& p) {
        if (p.empty()) return p;
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? p : (std::filesystem::path(base_dir) / fp).lexically_normal().string();
    };
    if (j.contains("files")) {
        const auto& f = j.at("files");
        detail::allow_keys(f, {"physical_data", "computer_data", "physical_model", "emulator_model"}, "config.files");
        c.physical_data = resolve(get_checked<std::string>(f, "physical_data", "", "config.files"));
        c.computer_data = resolve(get_checked<std::string>(f, "computer_data", "", "config.files"));
        c.physical_model = resolve(get_checked<std::string>(f, "physical_model", "", "config.files"));
        c.emulator_model = resolve(get_checked<std::string>(f, "emulator_model", "", "config.files"));
    }
    if (j.contains("klr")) {
        const auto& k = j.at("klr");
        detail::allow_keys(k, {"nu", "rho_grid", "lambda_grid", "lambda_decades_per_step"}, "config.klr");
        c.nu = get_checked(k, "nu", c.nu, "config.klr");
        if (k.contains("rho_grid")) c.rho_grid = detail::positive_grid(k.at("rho_grid"), "config.klr.rho_grid");
        if (k.contains("lambda_grid")) c.lambda_grid = detail::positive_grid(k.at("lambda_grid"), "config.klr.lambda_grid");
        c.lambda_decades_per_step = get_checked(k, "lambda_decades_per_step", c.lambda_decades_per_step, "config.klr");
        KernelSpec::matern(c.nu, 1.0);
        if (!(c.lambda_decades_per_step > 0.0)) throw InputError("config.klr.lambda_decades_per_step must be positive");
    }
    if (j.contains("gpc")) {
        const auto& g = j.at("gpc");
        detail::allow_keys(g, {"phi_grid"}, "config.gpc");
        if (g.contains("phi_grid")) c.phi_grid = detail::positive_grid(g.at("phi_grid"), "config.gpc.phi_grid");
    }
    c.folds = get_checked(j, "cv_folds", c.folds, "config");
    if (c.folds < 2) throw InputError("config.cv_folds must be at least 2");
    if (j.contains("quadrature")) {
        const auto& q = j.at("quadrature");
        detail::allow_keys(q, {"points", "rule"}, "config.quadrature");
        c.quad_points = get_checked<long>(q, "points", static_cast<long>(c.quad_points), "config.quadrature");
        const std::string rule = get_checked<std::string>(q, "rule", "sobol", "config.quadrature");
        if (rule == "sobol") c.quad_rule = QuadRule::Sobol;
        else if (rule == "monte_carlo") c.quad_rule = QuadRule::MonteCarlo;
        else throw InputError("config.quadrature.rule must be 'sobol' or 'monte_carlo'");
        if (c.quad_points < 16) throw InputError("config.quadrature.points must be at least 16");
    }
    if (j.contains("calibration")) {
        const auto& cal = j.at("calibration");
        detail::allow_keys(cal, {"starts", "inference"}, "config.calibration");
        c.starts = get_checked(cal, "starts", c.starts, "config.calibration");
        const std::string mode = get_checked<std::string>(cal, "inference", "plugin", "config.calibration");
        if (mode != "plugin") throw InputError("config.calibration.inference: only 'plugin' is available for fitted models");
        if (c.starts < 1) throw InputError("config.calibration.starts must be at least 1");
    }
    if (j.contains("sobol")) {
        const auto& s = j.at("sobol");
        detail::allow_keys(s, {"n_mc", "n_boot", "include_x"}, "config.sobol");
        c.sobol_n_mc = get_checked(s, "n_mc", c.sobol_n_mc, "config.sobol");
        c.sobol_n_boot = get_checked(s, "n_boot", c.sobol_n_boot, "config.sobol");
        c.sobol_include_x = get_checked(s, "include_x", c.sobol_include_x, "config.sobol");
        if (c.sobol_n_mc < 1000) throw InputError("config.sobol.n_mc must be at least 1000");
        if (c.sobol_n_boot < 0) throw InputError("config.sobol.n_boot must be non-negative");
    }
    if (j.contains("bench")) {
        const auto& b = j.at("bench");
        detail::allow_keys(b, {"scenario", "n", "N", "replicates", "naive", "naive_grid"}, "config.bench");
        c.bench_scenario = get_checked<std::string>(b, "scenario", c.bench_scenario, "config.bench");
        c.bench_n = get_checked(b, "n", c.bench_n, "config.bench");
        c.bench_N = get_checked(b, "N", c.bench_N, "config.bench");
        c.bench_replicates = get_checked(b, "replicates", c.bench_replicates, "config.bench");
        c.bench_naive = get_checked(b, "naive", c.bench_naive, "config.bench");
        c.bench_naive_grid = get_checked(b, "naive_grid", c.bench_naive_grid, "config.bench");
        if (c.bench_n < 2 || c.bench_N < 2 || c.bench_replicates < 1 || c.bench_naive_grid < 2)
            throw InputError("config.bench: n, N, replicates and naive_grid must be positive (n, N, naive_grid >= 2)");
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    const json j = read_json_file(path);
    return parse_config(j, std::filesystem::path(path).parent_path().string());
}

inline void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw InputError(what + " is not set (config 'files' section or command-line flag)");
    if (!std::filesystem::is_regular_file(path)) throw InputError(what + " '" + path + "' does not exist");
}

// ---------------------------------------------------------------- results

inline json to_json(const CalibrationResult& r) {
    json starts = json::array();
    for (const auto& s : r.starts) {
        starts.push_back({{"start", to_json(s.start)},
                          {"end", to_json(s.end)},
                          {"end_value", s.end_value},
                          {"iterations", s.iterations},
                          {"evaluations", s.evaluations},
                          {"status", to_string(s.status)}});
    }
    return {{"theta_hat", to_json(r.theta_hat)},
            {"theta_unit", to_json(r.theta_unit)},
            {"l2_distance", number_or_null(r.l2_distance)},
            {"objective", r.objective},
            {"flat_flag", r.flat_flag},
            {"on_boundary", r.on_boundary},
            {"starts", starts},
            {"warnings", r.warnings}};
}

inline json to_json(const AsymptoticReport& r) {
    return {{"mode", to_string(r.mode)},
            {"n", r.n},
            {"V_hat", to_json(r.V_hat)},
            {"W_hat", to_json(r.W_hat)},
            {"cond_V", number_or_null(r.cond_V)},
            {"cov_unit", to_json(r.cov)},
            {"se_unit", to_json(r.se)},
            {"cov", to_json(r.cov_physical)},
            {"se", to_json(r.se_physical)},
            {"warnings", r.warnings}};
}

inline json to_json(const SobolResult& r, const std::vector<std::string>& names) {
    json rows = json::array();
    for (std::size_t k = 0; k < r.inputs.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        rows.push_back({{"input", names[static_cast<std::size_t>(r.inputs[k])]},
                        {"index", r.indices(i)},
                        {"ci_lo", r.ci_lo(i)},
                        {"ci_hi", r.ci_hi(i)}});
    }
    return {{"first_order", rows}, {"variance", r.variance}, {"n_mc", r.n_mc}, {"n_boot", r.n_boot}};
}

/// Common header of every result document.
inline json result_header(const std::string& command, const std::string& hash, std::uint64_t seed) {
    return {{"format", kResultFormat}, {"command", command}, {"config_hash", hash}, {"seed", seed}};
}

inline json error_json(const std::exception& e) {
    json j = {{"format", kResultFormat}, {"status", "error"}, {"error", {{"kind", error_kind(e)}, {"message", e.what()}}}};
    if (const auto* ne = dynamic_cast<const NumericalError*>(&e); ne && ne->jitter() > 0.0) j["error"]["jitter"] = ne->jitter();
    return j;
}

}  // namespace l2cal

#endif
