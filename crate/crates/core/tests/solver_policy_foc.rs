use pgcsim_core::closed_form::{constants, path_spec, Method};
use pgcsim_core::foc::{check_foc_social, FocTolerance, ScanSettings};
use pgcsim_core::paths::{DriftConvention, Ensemble, ExtremaMode, TimeGrid};
use pgcsim_core::solver::{build_lattice, calibrate_lambda, policy_from_signal, SolveMode, SolverOptions};
use pgcsim_core::ModelParams;

#[test]
fn calibrated_signal_satisfies_planner_conditions() {
    let p = ModelParams::symmetric(2, 1.0, 0.3, 0.3, 0.05, 0.2, 0.0);
    let lattice = build_lattice(&p, TimeGrid::new(200.0, 800).unwrap(), DriftConvention::RawExponential).unwrap();
    let u = p.utility();
    let (lambda, sol) = calibrate_lambda(&lattice, &u, &p, SolveMode::SocialPlanner, 2.0, &SolverOptions::default(), 1e-4).unwrap();
    let c = constants(&p, Method::AnalyticBs).unwrap();
    assert!((lambda / c.lambda_sp - 1.0).abs() < 0.01, "{lambda} vs {}", c.lambda_sp);
    let spec = path_spec(&p, *lattice.grid(), DriftConvention::RawExponential, ExtremaMode::Bridge).unwrap();
    let ens = Ensemble::new(spec, 1000, 3).unwrap();
    let scan = ScanSettings::new(vec![0.0, 1.0, 5.0, 10.0, 20.0, 40.0], 32, 32);
    let policy = |s: &_| policy_from_signal(&sol, &lattice, s, &u, &p).map(|r| r.policy);
    let r = check_foc_social(&ens, policy, &u, &p, lambda, &scan, &FocTolerance::default()).unwrap();
    assert!(r.passed(), "{r:#?}");
}
