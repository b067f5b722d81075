use pgcsim_core::closed_form::{constants, nash_policy, path_spec, sp_policy, theta_path, Method};
use pgcsim_core::paths::{
    discounted_integral, stieltjes_integral, DriftConvention, ExtremaMode, Lineage, SamplePath, TimeGrid,
};
use pgcsim_core::{CobbDouglasUtility, ModelParams, ValidationMode};
use proptest::prelude::*;

fn exponents() -> impl Strategy<Value = (f64, f64)> {
    (0.05f64..0.85).prop_flat_map(|a| (Just(a), 0.05f64..(0.95 - a)))
}

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

/// Black-Scholes economies that pass the finiteness check.
fn economy() -> impl Strategy<Value = ModelParams> {
    (1usize..9, 0.1f64..10.0, exponents(), 0.01f64..0.2, 0.0f64..0.5)
        .prop_map(|(n, w, (a, b), r, s)| ModelParams::symmetric(n, w, a, b, r, s, 0.0))
        .prop_filter("finite constants", |p| p.check(ValidationMode::BlackScholes).is_ok())
}

fn sample(p: &ModelParams, seed: u64) -> SamplePath {
    let spec = path_spec(p, TimeGrid::new(20.0, 400).unwrap(), DriftConvention::RawExponential, ExtremaMode::Bridge).unwrap();
    SamplePath::generate(&spec, Lineage { master_seed: seed, index: 0 })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

proptest! {
    #[test]
    fn inverse_identity((a, b) in exponents(), psi in log_uniform(1e-3, 1e3), c in log_uniform(1e-3, 1e3)) {
        let u = CobbDouglasUtility::new(a, b).unwrap();
        let x = u.inverse_marginal_g(psi, c).unwrap();
        prop_assert!(rel(u.marginal_x(x, c).unwrap(), psi) <= 1e-10);
    }

    #[test]
    fn reduced_marginal_two_routes((a, b) in exponents(), psi in log_uniform(1e-3, 1e3), c in log_uniform(1e-3, 1e3)) {
        let u = CobbDouglasUtility::new(a, b).unwrap();
        let direct = u.reduced_marginal_h(psi, c).unwrap();
        prop_assert!(rel(u.reduced_marginal_h_composed(psi, c).unwrap(), direct) <= 1e-10);
    }

    #[test]
    fn euler_homogeneity((a, b) in exponents(), x in log_uniform(1e-3, 1e3), c in log_uniform(1e-3, 1e3)) {
        let u = CobbDouglasUtility::new(a, b).unwrap();
        let lhs = x * u.marginal_x(x, c).unwrap() + c * u.marginal_c(x, c).unwrap();
        prop_assert!(rel(lhs, (a + b) * u.utility(x, c).unwrap()) <= 1e-12);
    }

    #[test]
    fn kappa_below_l0(p in economy()) {
        let c = constants(&p, Method::AnalyticBs).unwrap();
        prop_assert!(c.kappa <= c.l0);
        let solo = ModelParams { n_agents: 1, weights: vec![1.0], ..p };
        let c = constants(&solo, Method::AnalyticBs).unwrap();
        prop_assert_eq!(c.kappa, c.l0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integration_by_parts(p in economy(), seed in any::<u64>()) {
        let path = sample(&p, seed);
        let grid = path.grid();
        let r = p.discount_rate;
        let disc: Vec<f64> = (0..grid.len()).map(|k| (-r * grid.t(k)).exp()).collect();
        let theta = theta_path(&path, &p);
        let lhs = stieltjes_integral(&disc, &theta).unwrap();
        let n = grid.n_steps();
        let r_eff = -(-r * grid.dt()).exp_m1() / grid.dt();
        let rhs = disc[n] * theta.values()[n] + r_eff * discounted_integral(theta.values(), r, grid);
        prop_assert!(rel(lhs, rhs) <= 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn equilibrium_overconsumes(p in economy(), seed in any::<u64>()) {
        let c = constants(&p, Method::AnalyticBs).unwrap();
        let path = sample(&p, seed);
        let sp = sp_policy(&path, &c, &p).unwrap();
        let ne = nash_policy(&path, &c, &p).unwrap();
        for (xs, xn) in sp.agents[0].consumption.iter().zip(&ne.agents[0].consumption) {
            prop_assert!(xn >= xs);
        }
    }

    #[test]
    fn contributions_are_monotone(p in economy(), seed in any::<u64>()) {
        let c = constants(&p, Method::AnalyticBs).unwrap();
        let path = sample(&p, seed);
        for set in [sp_policy(&path, &c, &p).unwrap(), nash_policy(&path, &c, &p).unwrap()] {
            for pair in set.agents.iter().chain([&set.aggregate]) {
                let v = pair.contribution.values();
                prop_assert!(v.windows(2).all(|w| w[1] >= w[0]));
                prop_assert!(v[0] > 0.0);
            }
        }
        let sp = sp_policy(&path, &c, &p).unwrap();
        prop_assert_eq!(sp.aggregate.contribution.values()[0], c.l0);
    }
}
