#ifndef L2CAL_CLI_HPP
#define L2CAL_CLI_HPP

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "l2cal/bench.hpp"
#include "l2cal/calibrator.hpp"
#include "l2cal/gpc.hpp"
#include "l2cal/inference.hpp"
#include "l2cal/io.hpp"
#include "l2cal/klr.hpp"
#include "l2cal/sensitivity.hpp"

namespace l2cal::cli {

/// Flags shared by every subcommand plus per-command overrides.
struct Invocation {
    std::string config_path;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    int threads = 1;
    std::string data;            ///< overrides files.physical_data / files.computer_data
    std::string physical_model;  ///< overrides files.physical_model
    std::string emulator_model;  ///< overrides files.emulator_model
    std::optional<std::string> scenario;
    std::optional<long> n, N;
    std::optional<int> replicates;
    std::optional<bool> naive;
};

inline RunConfig load(const Invocation& inv) {
    RunConfig c = inv.config_path.empty() ? parse_config(json::object()) : load_config(inv.config_path);
    if (inv.threads < 1) throw InputError("--threads must be at least 1");
    std::filesystem::create_directories(inv.out_dir);
    return c;
}

inline void need_domains(const RunConfig& c, bool parameters) {
    if (c.controls.dim() == 0) throw InputError("config: 'controls' must list the control inputs");
    if (parameters && c.parameters.dim() == 0) throw InputError("config: 'parameters' must list the calibration parameters");
}

inline std::string out_path(const Invocation& inv, const std::string& name) {
    return (std::filesystem::path(inv.out_dir) / name).string();
}

/// Fits the KLR to physical data with cross-validated (rho, lambda).
inline json cmd_fit_physical(const Invocation& inv, std::ostream& log = std::cout) {
    const RunConfig c = load(inv);
    need_domains(c, false);
    const std::string path = inv.data.empty() ? c.physical_data : inv.data;
    require_file(path, "physical data");
    const PhysicalDataset data = read_physical_csv(path, c.controls);
    const auto lgrid = c.lambda_grid.empty() ? default_lambda_grid(data.size(), data.dim(), c.nu, c.lambda_decades_per_step)
                                             : c.lambda_grid;
    const KlrTuning tune = cv_tune_klr(data, c.rho_grid, lgrid, c.folds, substream_seed(inv.seed, "cv-klr"), c.nu);
    KlrModel model = fit_klr(data, tune.spec, tune.lambda);
    for (const auto& w : tune.warnings) model.warnings.push_back(w);

    const std::string hash = config_hash(c.raw);
    json doc = result_header("fit-physical", hash, inv.seed);
    doc["model"] = to_json(model);
    doc["cv"] = {{"rho_grid", tune.rho_grid}, {"lambda_grid", tune.lambda_grid}, {"mean_log_loss", to_json(tune.cv_loss)},
                 {"folds", c.folds}};
    write_json_file(out_path(inv, "physical_model.json"), doc);

    Table t;
    t.header = {"rho", "lambda", "mean_log_loss"};
    t.values.resize(static_cast<Eigen::Index>(tune.rho_grid.size() * tune.lambda_grid.size()), 3);
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < tune.rho_grid.size(); ++i)
        for (std::size_t k = 0; k < tune.lambda_grid.size(); ++k, ++r)
            t.values.row(r) << tune.rho_grid[i], tune.lambda_grid[k], tune.cv_loss(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    write_csv(out_path(inv, "cv_klr.csv"), t, std::string(kCsvFormat) + " config_hash=" + hash);

    log << "KLR fitted to " << data.size() << " observations: Matern(nu=" << model.spec.nu << ", rho=" << model.spec.rho
        << "), lambda=" << model.lambda << ", converged=" << (model.log.converged ? "yes" : "no") << "\n";
    for (const auto& w : model.warnings) log << "warning: " << w << "\n";
    return doc;
}

/// Fits the GPC emulator with a cross-validated RBF phi.
inline json cmd_fit_emulator(const Invocation& inv, std::ostream& log = std::cout) {
    const RunConfig c = load(inv);
    need_domains(c, true);
    const std::string path = inv.data.empty() ? c.computer_data : inv.data;
    require_file(path, "computer data");
    const ComputerDataset data = read_computer_csv(path, c.controls, c.parameters);
    const GpcTuning tune = cv_tune_gpc(data, c.phi_grid, c.folds, substream_seed(inv.seed, "cv-gpc"));
    const GpcModel model = fit_gpc(data, tune.spec);

    const std::string hash = config_hash(c.raw);
    json doc = result_header("fit-emulator", hash, inv.seed);
    doc["model"] = to_json(model);
    doc["cv"] = {{"phi_grid", tune.phi_grid}, {"mean_log_loss", tune.cv_loss}, {"folds", c.folds}};
    doc["warnings"] = tune.warnings;
    write_json_file(out_path(inv, "emulator_model.json"), doc);

    Table t;
    t.header = {"phi", "mean_log_loss"};
    t.values.resize(static_cast<Eigen::Index>(tune.phi_grid.size()), 2);
    for (std::size_t k = 0; k < tune.phi_grid.size(); ++k)
        t.values.row(static_cast<Eigen::Index>(k)) << tune.phi_grid[k], tune.cv_loss[k];
    write_csv(out_path(inv, "cv_gpc.csv"), t, std::string(kCsvFormat) + " config_hash=" + hash);

    log << "GPC emulator fitted to " << data.size() << " runs: RBF(phi=" << model.spec().phi
        << "), converged=" << (model.train_log().converged ? "yes" : "no") << "\n";
    if (!model.train_log().converged) log << "warning: Laplace mode did not reach tolerance\n";
    for (const auto& w : tune.warnings) log << "warning: " << w << "\n";
    return doc;
}

/// Reads a model artifact, accepting either the bare model or a fit-* result document.
inline json model_section(const std::string& path) {
    const json j = read_json_file(path);
    return j.contains("model") ? j.at("model") : j;
}

inline json cmd_calibrate(const Invocation& inv, std::ostream& log = std::cout) {
    const RunConfig c = load(inv);
    const std::string pm = inv.physical_model.empty() ? c.physical_model : inv.physical_model;
    const std::string em = inv.emulator_model.empty() ? c.emulator_model : inv.emulator_model;
    require_file(pm, "physical model");
    require_file(em, "emulator model");
    const KlrModel klr = klr_from_json(model_section(pm), pm);
    const GpcModel gpc = gpc_from_json(model_section(em), em);
    if (klr.domain.dim() != gpc.dim_x()) throw InputError("physical model and emulator disagree on the control inputs");
    for (int i = 0; i < gpc.dim_x(); ++i) {
        const auto &a = klr.domain[i], &b = gpc.domain_x()[i];
        if (a.lo != b.lo || a.hi != b.hi || a.log_scale != b.log_scale)
            throw InputError("control input '" + a.name + "' has different ranges in the two models");
    }
    const L2Objective obj = L2Objective::from_models(klr, gpc, c.quad_points, c.quad_rule, substream_seed(inv.seed, "quadrature"));
    CalibrateOptions co;
    co.n_starts = c.starts;
    co.seed = inv.seed;
    co.threads = inv.threads;
    const CalibrationResult cr = calibrate(obj, gpc.domain_theta(), co);
    const long n = static_cast<long>(klr.centers.rows());

    const std::string hash = config_hash(c.raw);
    json doc = result_header("calibrate", hash, inv.seed);
    doc["parameters"] = to_json(gpc.domain_theta());
    doc["calibration"] = to_json(cr);
    doc["quadrature"] = {{"points", c.quad_points}, {"rule", c.quad_rule == QuadRule::Sobol ? "sobol" : "monte_carlo"}};
    std::optional<AsymptoticReport> rep;
    try {
        rep = asymptotic_report(obj, cr.theta_unit, n, InferenceMode::Plugin, gpc.domain_theta());
        doc["inference"] = to_json(*rep);
    } catch (const NumericalError& e) {
        doc["inference"] = {{"mode", "plugin"}, {"error", e.what()}};
    }
    write_json_file(out_path(inv, "calibration.json"), doc);

    Table t;
    const int q = gpc.dim_theta();
    for (int j = 0; j < q; ++j) t.header.push_back("start_" + gpc.domain_theta()[j].name);
    for (int j = 0; j < q; ++j) t.header.push_back("end_" + gpc.domain_theta()[j].name);
    t.header.insert(t.header.end(), {"l2_distance", "iterations", "evaluations", "converged"});
    t.values.resize(static_cast<Eigen::Index>(cr.starts.size()), 2 * q + 4);
    for (std::size_t s = 0; s < cr.starts.size(); ++s) {
        const auto& st = cr.starts[s];
        const auto r = static_cast<Eigen::Index>(s);
        t.values.row(r).head(q) = gpc.domain_theta().from_unit(st.start).transpose();
        t.values.row(r).segment(q, q) = gpc.domain_theta().from_unit(st.end).transpose();
        t.values(r, 2 * q) = st.end_value;
        t.values(r, 2 * q + 1) = st.iterations;
        t.values(r, 2 * q + 2) = st.evaluations;
        t.values(r, 2 * q + 3) = st.status == StartStatus::Converged ? 1.0 : 0.0;
    }
    write_csv(out_path(inv, "starts.csv"), t, std::string(kCsvFormat) + " config_hash=" + hash);

    log << "theta_hat:\n";
    for (int j = 0; j < q; ++j) {
        const auto& co_j = gpc.domain_theta()[j];
        log << "  " << co_j.name << " = " << format_number(cr.theta_hat(j));
        if (rep) log << "  (se " << format_number(rep->se_physical(j)) << ")";
        if (!co_j.units.empty()) log << " " << co_j.units;
        log << "\n";
    }
    log << "L2 distance (unit coordinates): " << format_number(cr.l2_distance) << "\n";
    for (const auto& w : cr.warnings) log << "warning: " << w << "\n";
    if (rep)
        for (const auto& w : rep->warnings) log << "warning: " << w << "\n";
    else
        log << "warning: standard errors unavailable: " << doc["inference"]["error"].get<std::string>() << "\n";
    return doc;
}

inline json cmd_sobol(const Invocation& inv, std::ostream& log = std::cout) {
    const RunConfig c = load(inv);
    const std::string em = inv.emulator_model.empty() ? c.emulator_model : inv.emulator_model;
    require_file(em, "emulator model");
    const GpcModel gpc = gpc_from_json(model_section(em), em);
    const SobolResult r = sobol_emulator(gpc, c.sobol_n_mc, c.sobol_n_boot, substream_seed(inv.seed, "bootstrap"), c.sobol_include_x);
    std::vector<std::string> names;
    for (const auto& co : gpc.domain_x().coords()) names.push_back(co.name);
    for (const auto& co : gpc.domain_theta().coords()) names.push_back(co.name);

    const std::string hash = config_hash(c.raw);
    json doc = result_header("sobol", hash, inv.seed);
    doc["sobol"] = to_json(r, names);
    write_json_file(out_path(inv, "sobol.json"), doc);

    std::ofstream f(out_path(inv, "sobol.csv"));
    if (!f) throw InputError("cannot write sobol.csv");
    f << "# " << kCsvFormat << " config_hash=" << hash << "\ninput,index,ci_lo,ci_hi\n";
    for (std::size_t k = 0; k < r.inputs.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        f << names[static_cast<std::size_t>(r.inputs[k])] << "," << format_number(r.indices(i)) << "," << format_number(r.ci_lo(i))
          << "," << format_number(r.ci_hi(i)) << "\n";
        log << names[static_cast<std::size_t>(r.inputs[k])] << ": S = " << r.indices(i) << " [" << r.ci_lo(i) << ", " << r.ci_hi(i)
            << "]\n";
    }
    return doc;
}

inline json bench_json(const BenchReport& rep) {
    return {{"scenario", to_string(rep.scenario.study)},
            {"n", rep.scenario.n},
            {"N", rep.scenario.N},
            {"replicates", rep.scenario.replicates},
            {"master_seed", rep.scenario.seed},
            {"failures", rep.failures},
            {"mean", to_json(rep.mean)},
            {"sd", to_json(rep.sd)},
            {"naive_mean", to_json(rep.naive_mean)},
            {"naive_sd", to_json(rep.naive_sd)},
            {"asymptotic_n_var", number_or_null(rep.asymptotic_var)},
            {"ks_distance", number_or_null(rep.ks_distance)},
            {"warnings", rep.warnings}};
}

inline BenchOptions bench_options(const RunConfig& c, const Invocation& inv) {
    BenchOptions o;
    o.folds = c.folds;
    o.nu = c.nu;
    o.rho_grid = c.rho_grid;
    o.lambda_decades_per_step = c.lambda_decades_per_step;
    o.phi_grid = c.phi_grid;
    o.quad_points = c.quad_points;
    o.rule = c.quad_rule;
    o.n_starts = c.starts;
    o.naive = inv.naive.value_or(c.bench_naive);
    o.naive_grid = c.bench_naive_grid;
    o.threads = inv.threads;
    return o;
}

inline json cmd_bench(const Invocation& inv, std::ostream& log = std::cout) {
    const RunConfig c = load(inv);
    if (!c.lambda_grid.empty()) throw InputError("bench: klr.lambda_grid is not used; set lambda_decades_per_step instead");
    const BenchScenario sc = BenchScenario::make(parse_study(inv.scenario.value_or(c.bench_scenario)), inv.n.value_or(c.bench_n),
                                                 inv.N.value_or(c.bench_N), inv.replicates.value_or(c.bench_replicates), inv.seed);
    const BenchReport rep = run_bench(sc, bench_options(c, inv));
    const std::string hash = config_hash(c.raw);
    write_bench_files(rep, inv.out_dir, hash);
    json doc = result_header("bench", hash, inv.seed);
    doc["bench"] = bench_json(rep);
    write_json_file(out_path(inv, "bench.json"), doc);

    log << to_string(sc.study) << " n=" << sc.n << " N=" << sc.N << ": " << sc.replicates - rep.failures << " of " << sc.replicates
        << " replicates succeeded in " << rep.seconds << " s\n";
    for (Eigen::Index j = 0; j < rep.mean.size(); ++j)
        log << "  theta" << j + 1 << ": mean " << rep.mean(j) << ", sd " << rep.sd(j) << " (theta* " << sc.theta_star()(j) << ")\n";
    for (Eigen::Index j = 0; j < rep.naive_mean.size(); ++j)
        log << "  naive theta" << j + 1 << ": mean " << rep.naive_mean(j) << ", sd " << rep.naive_sd(j) << "\n";
    if (std::isfinite(rep.ks_distance))
        log << "  asymptotic sd " << std::sqrt(rep.asymptotic_var / sc.n) << ", KS distance " << rep.ks_distance << "\n";
    for (const auto& w : rep.warnings) log << "warning: " << w << "\n";
    return doc;
}

/// Exit status for a failed command.
inline int exit_code(const std::exception& e) {
    const std::string k = error_kind(e);
    if (k == "input_error") return 2;
    if (k == "numerical_error") return 3;
    if (k == "optimization_error") return 4;
    return 1;
}

}  // namespace l2cal::cli

#endif
