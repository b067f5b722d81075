use super::*;
use crate::closed_form::{constants, Method};
use crate::paths::{Lineage, PathSpec};
use approx::assert_relative_eq;

fn params(n: usize, sigma: f64) -> ModelParams {
    ModelParams::symmetric(n, 1.0, 0.3, 0.3, 0.05, sigma, 0.0)
}

fn lattice(p: &ModelParams, t_max: f64, steps: usize) -> Lattice {
    build_lattice(p, TimeGrid::new(t_max, steps).unwrap(), DriftConvention::RawExponential).unwrap()
}

/// Signal of the deterministic problem at step `k`, horizon truncated.
fn scalar_signal(p: &ModelParams, lat: &Lattice, lambda: f64, mu: f64, k: usize) -> f64 {
    let u = p.utility();
    let r = p.discount_rate;
    let tail = -(-r * (lat.grid().t_max() - lat.grid().t(k) + lat.grid().dt())).exp_m1();
    let base = lambda * r / (u.delta * mu.powf(u.h_psi_exponent()) * tail);
    base.powf(1.0 / u.h_c_exponent())
}

#[test]
fn two_step_lattice() {
    let p = params(2, 0.2);
    let lat = lattice(&p, 2.0, 2);
    assert_eq!((0..=2).map(|j| lat.w(2, j)).collect::<Vec<_>>(), vec![-2.0, 0.0, 2.0]);
    assert_eq!(lat.nearest_node(2, 0.9), (1, 0.9));
    assert_eq!(lat.nearest_node(2, -7.0), (0, -5.0));
    let flat = lattice(&params(2, 0.0), 2.0, 2);
    assert!((0..=2).all(|j| flat.ex(2, j) == 1.0));
}

#[test]
fn martingale_lattice_has_exact_one_step_means() {
    let p = params(2, 0.4);
    let lat = build_lattice(&p, TimeGrid::new(10.0, 40).unwrap(), DriftConvention::Martingale).unwrap();
    for k in [0, 7, 39] {
        for j in 0..=k {
            let mean = 0.5 * (lat.ex(k + 1, j) + lat.ex(k + 1, j + 1));
            assert_relative_eq!(mean, lat.ex(k, j), max_relative = 1e-12);
        }
    }
}

#[test]
fn oversized_lattice_is_rejected() {
    let p = params(2, 0.2);
    let grid = TimeGrid::new(1.0, MAX_LATTICE_STEPS + 1).unwrap();
    assert!(matches!(build_lattice(&p, grid, DriftConvention::Martingale), Err(Error::Config(_))));
}

#[test]
fn deterministic_signal_solves_scalar_equation() {
    let p = params(2, 0.0);
    let lat = lattice(&p, 400.0, 200);
    let u = p.utility();
    let lambda = 1.7;
    let sol = solve_signal(&lat, &u, lambda, &p, SolveMode::SocialPlanner, &SolverOptions::default()).unwrap();
    for k in (0..=200).step_by(13) {
        let want = scalar_signal(&p, &lat, lambda, 2.0 * lambda, k);
        for j in 0..=k {
            assert_relative_eq!(sol.l_star(k, j), want, max_relative = 1e-6);
        }
    }
    assert!(sol.max_residual() <= 1e-8);
}

#[test]
fn degenerate_multiplier_gives_closed_form_level() {
    let p = params(2, 0.0);
    let lat = lattice(&p, 400.0, 200);
    let u = p.utility();
    let l0 = constants(&p, Method::AnalyticBs).unwrap().l0;
    let lambda = 2f64.powf(-p.alpha) * (u.delta / p.discount_rate).powf(1.0 - p.alpha) * l0.powf(p.alpha + p.beta - 1.0);
    let sol = solve_signal(&lat, &u, lambda, &p, SolveMode::SocialPlanner, &SolverOptions::default()).unwrap();
    // truncation at T is below 1e-7 up to t = 50
    for k in 0..=25 {
        assert_relative_eq!(sol.l_star(k, k / 2), l0, max_relative = 1e-6);
    }
}

#[test]
fn calibration_recovers_degenerate_multiplier() {
    let p = params(2, 0.0);
    let lat = lattice(&p, 400.0, 100);
    let u = p.utility();
    let l0 = constants(&p, Method::AnalyticBs).unwrap().l0;
    let want = 2f64.powf(-p.alpha) * (u.delta / p.discount_rate).powf(1.0 - p.alpha) * l0.powf(p.alpha + p.beta - 1.0);
    let opts = SolverOptions { tol: 1e-13, ..Default::default() };
    let (lambda, sol) = calibrate_lambda(&lat, &u, &p, SolveMode::SocialPlanner, 2.0, &opts, 1e-10).unwrap();
    assert_relative_eq!(lambda, want, max_relative = 1e-4);
    assert_relative_eq!(sol.l_star(0, 0), l0, max_relative = 1e-4);
    assert_relative_eq!(lattice_budget(&lat, &u, &p, &sol).unwrap(), 2.0, max_relative = 1e-10);

    // budget linear in the level
    let rich = ModelParams { wealth: 2.0, ..p.clone() };
    let (_, sol2) = calibrate_lambda(&lat, &u, &rich, SolveMode::SocialPlanner, 4.0, &opts, 1e-10).unwrap();
    for k in [0, 50, 100] {
        assert_relative_eq!(sol2.l_star(k, 0), 2.0 * sol.l_star(k, 0), max_relative = 1e-9);
    }
}

#[test]
fn calibration_without_budget_exponent_bisects() {
    struct Plain(crate::CobbDouglasUtility);
    impl UtilityContract for Plain {
        fn u_x(&self, x: f64, c: f64) -> f64 {
            self.0.u_x(x, c)
        }
        fn u_c(&self, x: f64, c: f64) -> f64 {
            self.0.u_c(x, c)
        }
        fn g(&self, psi: f64, c: f64) -> f64 {
            self.0.g(psi, c)
        }
        fn h(&self, psi: f64, c: f64) -> f64 {
            self.0.h(psi, c)
        }
    }
    let p = params(3, 0.1);
    let lat = lattice(&p, 100.0, 30);
    let opts = SolverOptions::default();
    let (l1, _) = calibrate_lambda(&lat, &p.utility(), &p, SolveMode::NashSymmetric, 1.0, &opts, 1e-6).unwrap();
    let (l2, s2) = calibrate_lambda(&lat, &Plain(p.utility()), &p, SolveMode::NashSymmetric, 1.0, &opts, 1e-6).unwrap();
    assert_relative_eq!(l1, l2, max_relative = 1e-5);
    assert_relative_eq!(lattice_budget(&lat, &Plain(p.utility()), &p, &s2).unwrap(), 1.0, max_relative = 1e-6);
}

#[test]
fn signal_decreases_in_multiplier() {
    let p = params(2, 0.3);
    let lat = lattice(&p, 60.0, 60);
    let u = p.utility();
    let opts = SolverOptions::default();
    let a = solve_signal(&lat, &u, 2.0, &p, SolveMode::SocialPlanner, &opts).unwrap();
    let b = solve_signal(&lat, &u, 2.5, &p, SolveMode::SocialPlanner, &opts).unwrap();
    for k in 0..=60 {
        for j in 0..=k {
            assert!(a.l_star(k, j) >= b.l_star(k, j));
        }
    }
}

#[test]
fn single_agent_game_is_the_planner_problem() {
    let p = params(1, 0.25);
    let lat = lattice(&p, 40.0, 40);
    let u = p.utility();
    let opts = SolverOptions::default();
    let a = solve_signal(&lat, &u, 1.3, &p, SolveMode::SocialPlanner, &opts).unwrap();
    let b = solve_signal(&lat, &u, 1.3, &p, SolveMode::NashSymmetric, &opts).unwrap();
    for k in 0..=40 {
        assert_eq!(a.step_values(k), b.step_values(k));
    }
}

#[test]
fn game_signal_is_per_agent() {
    let p = params(4, 0.0);
    let lat = lattice(&p, 400.0, 100);
    let u = p.utility();
    let lambda = 0.9;
    let sol = solve_signal(&lat, &u, lambda, &p, SolveMode::NashSymmetric, &SolverOptions::default()).unwrap();
    let agg = scalar_signal(&p, &lat, lambda, lambda, 0);
    assert_relative_eq!(sol.aggregate(0, 0), agg, max_relative = 1e-6);
    assert_relative_eq!(sol.l_star(0, 0), agg / 4.0, max_relative = 1e-6);
}

#[test]
fn residuals_within_contract() {
    let p = params(2, 0.2);
    let lat = lattice(&p, 100.0, 100);
    let sol = solve_signal(&lat, &p.utility(), 3.0, &p, SolveMode::SocialPlanner, &SolverOptions::default()).unwrap();
    assert!(sol.max_residual() <= 1e-8, "{}", sol.max_residual());
    assert!((0..=100).all(|k| sol.step_values(k).iter().all(|l| l.is_finite() && *l > 0.0)));
}

#[test]
fn bad_inputs() {
    let p = params(2, 0.2);
    let lat = lattice(&p, 10.0, 10);
    let u = p.utility();
    let opts = SolverOptions::default();
    assert!(solve_signal(&lat, &u, -1.0, &p, SolveMode::SocialPlanner, &opts).is_err());
    let bad = SolverOptions { m_points: 1, ..opts };
    assert!(matches!(solve_signal(&lat, &u, 1.0, &p, SolveMode::SocialPlanner, &bad), Err(Error::Config(_))));
    assert!(calibrate_lambda(&lat, &u, &p, SolveMode::SocialPlanner, 0.0, &opts, 1e-8).is_err());
    // a utility without Inada behaviour in c has no root
    struct Flat;
    impl UtilityContract for Flat {
        fn u_x(&self, _: f64, _: f64) -> f64 {
            1.0
        }
        fn u_c(&self, _: f64, _: f64) -> f64 {
            1.0
        }
        fn g(&self, _: f64, _: f64) -> f64 {
            1.0
        }
        fn h(&self, _: f64, _: f64) -> f64 {
            1e-3
        }
    }
    assert!(matches!(solve_signal(&lat, &Flat, 1.0, &p, SolveMode::SocialPlanner, &opts), Err(Error::Bracket { .. })));
}

#[test]
fn constant_signal_gives_constant_contribution() {
    let p = params(2, 0.0);
    let lat = lattice(&p, 400.0, 100);
    let u = p.utility();
    let mut sol = solve_signal(&lat, &u, 1.7, &p, SolveMode::SocialPlanner, &SolverOptions::default()).unwrap();
    sol.log_level.iter_mut().for_each(|y| *y = 0.3f64.ln());
    let grid = TimeGrid::new(400.0, 200).unwrap();
    let spec = crate::closed_form::path_spec(&p, grid, DriftConvention::RawExponential, crate::paths::ExtremaMode::Grid)
        .unwrap();
    let path = SamplePath::generate(&spec, Lineage { master_seed: 1, index: 0 });
    let pol = policy_from_signal(&sol, &lat, &path, &u, &p).unwrap();
    let c = pol.policy.aggregate.contribution.values();
    assert_eq!(pol.policy.aggregate.contribution.atom_at_zero(), sol.l_star(0, 0));
    assert_relative_eq!(c[0], 0.3, max_relative = 1e-15);
    assert!(c.iter().all(|v| *v == c[0]));
    let x = u.g(2.0 * 1.7, c[0]);
    assert_relative_eq!(pol.policy.agents[1].consumption[5], x, max_relative = 1e-14);
    assert_relative_eq!(pol.policy.aggregate.consumption[5], 2.0 * x, max_relative = 1e-14);
}

#[test]
fn contribution_is_monotone_and_projection_close() {
    let p = params(2, 0.3);
    let lat = lattice(&p, 50.0, 100);
    let u = p.utility();
    let sol = solve_signal(&lat, &u, 2.0, &p, SolveMode::NashSymmetric, &SolverOptions::default()).unwrap();
    let grid = TimeGrid::new(50.0, 400).unwrap();
    let spec = PathSpec::new(
        grid,
        FactorSpec::new(0.3, DriftConvention::RawExponential).unwrap(),
        FactorSpec::new(0.0, DriftConvention::RawExponential).unwrap(),
    );
    for i in 0..20 {
        let path = SamplePath::generate(&spec, Lineage { master_seed: 9, index: i });
        let pol = policy_from_signal(&sol, &lat, &path, &u, &p).unwrap();
        let c = pol.policy.aggregate.contribution.values();
        assert!(c.windows(2).all(|w| w[1] >= w[0]));
        assert!(pol.max_projection_error.is_finite() && pol.max_projection_error > 0.0);
        assert_relative_eq!(pol.policy.agents[0].contribution.values()[400], c[400] / 2.0);
    }
}

#[test]
fn mismatched_sample_grid() {
    let p = params(2, 0.3);
    let lat = lattice(&p, 10.0, 10);
    let sol = solve_signal(&lat, &p.utility(), 2.0, &p, SolveMode::SocialPlanner, &SolverOptions::default()).unwrap();
    let spec = crate::closed_form::path_spec(
        &p,
        TimeGrid::new(10.0, 15).unwrap(),
        DriftConvention::RawExponential,
        crate::paths::ExtremaMode::Grid,
    )
    .unwrap();
    let path = SamplePath::generate(&spec, Lineage { master_seed: 1, index: 0 });
    assert!(matches!(policy_from_signal(&sol, &lat, &path, &p.utility(), &p), Err(Error::GridMismatch(_))));
}

#[test]
fn overshoot_correction_moves_towards_ansatz() {
    let p = params(2, 0.2);
    let lat = lattice(&p, 200.0, 100);
    let u = p.utility();
    let c = constants(&p, Method::AnalyticBs).unwrap();
    let plain = SolverOptions { overshoot: false, ..Default::default() };
    let a = solve_signal(&lat, &u, c.lambda_sp, &p, SolveMode::SocialPlanner, &plain).unwrap();
    let b = solve_signal(&lat, &u, c.lambda_sp, &p, SolveMode::SocialPlanner, &SolverOptions::default()).unwrap();
    assert!(a.l_star(0, 0) > b.l_star(0, 0) && b.l_star(0, 0) > c.l0);
}

#[test]
fn log_linear_signal_reads_back_exactly() {
    let p = params(2, 0.3);
    let lat = lattice(&p, 20.0, 40);
    let u = p.utility();
    let c = constants(&p, Method::AnalyticBs).unwrap();
    let mut sol = solve_signal(&lat, &u, c.lambda_sp, &p, SolveMode::SocialPlanner, &SolverOptions::default()).unwrap();
    let cp = crate::closed_form::Exponents::new(&p).c_prime;
    for k in 0..=40 {
        for j in 0..=k {
            sol.log_level[offset(k) + j] = c.l0.ln() - cp * p.sigma_x * lat.w(k, j);
        }
    }
    let grid = TimeGrid::new(20.0, 120).unwrap();
    let path_for = |mode| {
        let spec = crate::closed_form::path_spec(&p, grid, DriftConvention::RawExponential, mode).unwrap();
        SamplePath::generate(&spec, Lineage { master_seed: 4, index: 2 })
    };
    let on_grid = path_for(crate::paths::ExtremaMode::Grid);
    let got = policy_from_signal(&sol, &lat, &on_grid, &u, &p).unwrap().policy.aggregate.contribution;
    let want = crate::closed_form::theta_path(&on_grid, &p).scaled(c.l0);
    for (a, b) in got.values().iter().zip(want.values()) {
        assert_relative_eq!(*a, *b, max_relative = 1e-12);
    }
    // bridge minima only add to the supremum
    let bridged = path_for(crate::paths::ExtremaMode::Bridge);
    assert_eq!(bridged.log_ex(), on_grid.log_ex());
    let hi = policy_from_signal(&sol, &lat, &bridged, &u, &p).unwrap().policy.aggregate.contribution;
    assert!(hi.values().iter().zip(got.values()).all(|(a, b)| a >= b));
    assert!(hi.last() > got.last());
}
