#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "l2cal/cli.hpp"

namespace {

void report_error(const std::exception& e, const std::string& out_dir) {
    const auto j = l2cal::error_json(e);
    std::cerr << j.dump() << "\n";
    if (!out_dir.empty() && std::filesystem::is_directory(out_dir)) {
        std::ofstream f(std::filesystem::path(out_dir) / "error.json");
        f << j.dump(2) << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    using namespace l2cal::cli;
    CLI::App app{"L2 calibration of computer models with binary responses"};
    app.set_version_flag("--version", "l2cal 1.0.0");
    app.require_subcommand(1);
    Invocation inv;
    app.add_option("--config", inv.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", inv.seed, "master seed for every random stream");
    app.add_option("--out", inv.out_dir, "output directory (created if missing)");
    app.add_option("--threads", inv.threads, "worker threads")->check(CLI::PositiveNumber);

    auto* fp = app.add_subcommand("fit-physical", "fit kernel logistic regression to physical data");
    fp->add_option("--data", inv.data, "physical CSV (overrides the config)");
    auto* fe = app.add_subcommand("fit-emulator", "fit the Gaussian-process classification emulator");
    fe->add_option("--data", inv.data, "computer CSV (overrides the config)");
    auto* ca = app.add_subcommand("calibrate", "estimate theta by minimizing the L2 distance");
    ca->add_option("--physical-model", inv.physical_model, "output of fit-physical");
    ca->add_option("--emulator-model", inv.emulator_model, "output of fit-emulator");
    auto* so = app.add_subcommand("sobol", "first-order Sobol indices of the emulator");
    so->add_option("--emulator-model", inv.emulator_model, "output of fit-emulator");
    auto* be = app.add_subcommand("bench", "run a synthetic replicate study");
    be->add_option("--scenario", inv.scenario, "study41 or study42");
    be->add_option("--n", inv.n, "physical sample size");
    be->add_option("--N", inv.N, "computer sample size");
    be->add_option("--replicates", inv.replicates, "number of replicates");
    be->add_flag("--naive{true}", inv.naive, "also run the misclassification baseline");

    // Global options are accepted after the subcommand as well.
    for (auto* sub : {fp, fe, ca, so, be}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error(l2cal::InputError(e.what()), "");
        return 2;
    }

    try {
        if (*fp) cmd_fit_physical(inv);
        else if (*fe) cmd_fit_emulator(inv);
        else if (*ca) cmd_calibrate(inv);
        else if (*so) cmd_sobol(inv);
        else if (*be) cmd_bench(inv);
    } catch (const std::exception& e) {
        report_error(e, inv.out_dir);
        return exit_code(e);
    }
    return 0;
}
