// Calibrates the one-parameter synthetic model end to end and prints theta-hat
// with its plug-in standard error.
#include <iostream>

#include "l2cal/bench.hpp"
#include "l2cal/inference.hpp"

int main() {
    using namespace l2cal;
    const auto sc = BenchScenario::make(Study::Study41, 100, 900, 1, 2024);
    const std::uint64_t seed = replicate_seed(sc.seed, 0);
    const PhysicalDataset phys = generate_physical(sc, seed);
    const ComputerDataset comp = generate_computer(sc, seed);

    const auto kt = cv_tune_klr(phys, default_rho_grid(), default_lambda_grid(phys.size(), 1, 2.5), 10, seed);
    const KlrModel eta = fit_klr(phys, kt.spec, kt.lambda);
    const auto gt = cv_tune_gpc(comp, default_phi_grid(), 10, seed);
    const GpcModel p = fit_gpc(comp, gt.spec);

    const L2Objective obj = L2Objective::from_models(eta, p, 10000, QuadRule::Sobol, seed);
    const CalibrationResult cr = calibrate(obj, sc.theta_box());
    const AsymptoticReport ar = asymptotic_report(obj, cr.theta_unit, phys.size(), InferenceMode::Plugin, sc.theta_box());

    std::cout << "KLR: rho=" << eta.spec.rho << " lambda=" << eta.lambda << "\n"
              << "GPC: phi=" << p.spec().phi << "\n"
              << "theta_hat=" << cr.theta_hat(0) << " se=" << ar.se_physical(0) << " (theta*=0.3)\n"
              << "L2 distance=" << cr.l2_distance << "\n";
}
