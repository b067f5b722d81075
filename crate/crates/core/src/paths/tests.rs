use super::*;
use approx::assert_relative_eq;

fn spec(t_max: f64, n: usize, sigma: f64, conv: DriftConvention) -> PathSpec {
    let grid = TimeGrid::new(t_max, n).unwrap();
    PathSpec::new(grid, FactorSpec::new(sigma, conv).unwrap(), FactorSpec::new(0.0, conv).unwrap())
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

#[test]
fn grid_basics() {
    let g = TimeGrid::new(200.0, 50_000).unwrap();
    assert_relative_eq!(g.dt(), 0.004, max_relative = 1e-15);
    assert_eq!(g.len(), 50_001);
    assert_eq!(g.index_of(100.0), Some(25_000));
    assert_eq!(g.index_of(100.001), None);
    assert!(TimeGrid::new(0.0, 10).is_err());
    assert!(TimeGrid::new(1.0, 0).is_err());
    assert_eq!(TimeGrid::with_dt(200.0, 1.0 / 250.0).unwrap().n_steps(), 50_000);
}

#[test]
fn zero_volatility_paths_are_flat() {
    let s = spec(10.0, 100, 0.0, DriftConvention::Martingale);
    let e = Ensemble::new(s, 5, 1).unwrap();
    for i in 0..5 {
        let p = e.path(i);
        assert!(p.ex_values().iter().chain(p.ec_values().iter()).all(|v| *v == 1.0));
    }
}

#[test]
fn nonpositive_path_count_rejected() {
    let s = spec(1.0, 10, 0.2, DriftConvention::Martingale);
    assert!(matches!(Ensemble::new(s, 0, 1), Err(Error::Config(_))));
}

#[test]
fn martingale_and_raw_means() {
    let s = spec(1.0, 50, 0.2, DriftConvention::Martingale);
    let e = Ensemble::new(s, 100_000, 7).unwrap();
    let est = e.estimate(|p| p.ex(50));
    assert!(est.within(1.0, 3.0), "{est:?}");
    let mid = e.estimate(|p| p.ex(10));
    assert!(mid.within(1.0, 3.0), "{mid:?}");

    let s = spec(1.0, 50, 0.2, DriftConvention::RawExponential);
    let e = Ensemble::new(s, 100_000, 8).unwrap();
    let est = e.estimate(|p| p.ex(50));
    assert!(est.within(0.02f64.exp(), 3.0), "{est:?}");
}

#[test]
fn reproducible_from_seed_and_index() {
    let s = spec(5.0, 200, 0.3, DriftConvention::Martingale).with_extrema(ExtremaMode::Bridge);
    let a = Ensemble::new(s, 10, 42).unwrap();
    let b = Ensemble::new(s, 1000, 42).unwrap();
    assert_eq!(a.path(7), b.path(7));
    assert_ne!(a.path(7), a.path(8));
    let c = Ensemble::new(s, 10, 43).unwrap();
    assert_ne!(a.path(7), c.path(7));
}

#[test]
fn independent_and_shared_drivers() {
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let f = FactorSpec::new(0.3, DriftConvention::RawExponential).unwrap();
    let shared = PathSpec::new(grid, f, f).with_coupling(Coupling::Shared);
    let p = SamplePath::generate(&shared, Lineage { master_seed: 1, index: 0 });
    assert_eq!(p.log_ex(), p.log_ec());
    let indep = PathSpec::new(grid, f, f);
    let q = SamplePath::generate(&indep, Lineage { master_seed: 1, index: 0 });
    assert_ne!(q.log_ex(), q.log_ec());
    // the x driver does not depend on the c volatility
    let lone = PathSpec::new(grid, f, FactorSpec::new(0.0, DriftConvention::RawExponential).unwrap());
    let r = SamplePath::generate(&lone, Lineage { master_seed: 1, index: 0 });
    assert_eq!(q.log_ex(), r.log_ex());
}

#[test]
fn restart_keeps_prefix() {
    let s = spec(4.0, 400, 0.25, DriftConvention::RawExponential).with_extrema(ExtremaMode::Bridge);
    let lin = Lineage { master_seed: 3, index: 11 };
    let base = SamplePath::generate(&s, lin);
    let k = 150;
    let segs = [Segment { from_step: 0, key: lin.key() }, Segment { from_step: k, key: Segment::restart_key(lin.key(), k, 0) }];
    let spliced = SamplePath::generate_segments(&s, lin, &segs);
    assert_eq!(&base.log_ex()[..=k], &spliced.log_ex()[..=k]);
    assert_eq!(&base.channel_inf(s.channel)[..=k], &spliced.channel_inf(s.channel)[..=k]);
    assert_ne!(base.log_ex()[k + 1], spliced.log_ex()[k + 1]);
}

#[test]
fn running_extrema() {
    assert_eq!(running_sup(&[1.0, 3.0, 2.0]), vec![1.0, 3.0, 3.0]);
    assert_eq!(running_inf(&[2.0, 2.0, 2.0]), vec![2.0, 2.0, 2.0]);
    let f = [0.5, -1.0, 2.0, 0.1, -3.0];
    let neg: Vec<f64> = f.iter().map(|v| -v).collect();
    let lhs = running_sup(&neg);
    let rhs: Vec<f64> = running_inf(&f).iter().map(|v| -v).collect();
    assert_eq!(lhs, rhs);
}

#[test]
fn two_time_inf_cases() {
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let ones = [1.0; 5];
    let flat = SamplePath::from_factors(grid, &ones, &ones, Channel::new(1.0, 0.0)).unwrap();
    for u in 0..5 {
        assert_eq!(two_time_inf(&flat, &flat, 0.7, u).unwrap(), 1.0);
    }
    assert!(matches!(two_time_inf(&flat, &flat, 0.7, 5), Err(Error::Index { .. })));

    let ex = [1.0, 1.3, 0.8, 1.1, 0.7];
    let ec = [1.0, 0.9, 1.2, 0.6, 0.95];
    let p = SamplePath::from_factors(grid, &ex, &ec, Channel::new(1.0, 0.0)).unwrap();
    let inf_c = running_inf(&ec);
    for u in 0..5 {
        assert_relative_eq!(two_time_inf(&p, &p, 0.0, u).unwrap(), inf_c[u], max_relative = 1e-14);
    }
    let q = 0.4286;
    let px = SamplePath::from_x_factor(grid, &ex, Channel::new(1.0, 0.0)).unwrap();
    let pw: Vec<f64> = ex.iter().map(|e| e.powf(-q)).collect();
    let brute = running_inf(&pw);
    for u in 0..5 {
        assert_relative_eq!(two_time_inf(&px, &px, q, u).unwrap(), brute[u], max_relative = 1e-13);
    }
    // mixed case against a direct double loop
    for u in 0..5 {
        let direct = (0..=u).map(|s| ec[s] * ex[u - s].powf(-q)).fold(f64::INFINITY, f64::min);
        assert_relative_eq!(two_time_inf(&p, &p, q, u).unwrap(), direct, max_relative = 1e-13);
    }
}

#[test]
fn discounted_integral_cases() {
    let grid = TimeGrid::new(200.0, 200_000).unwrap();
    let ones = vec![1.0; grid.len()];
    let v = discounted_integral(&ones, 0.05, &grid);
    assert!((v - 20.0).abs() / 20.0 < 0.005, "{v}");
    assert_eq!(discounted_integral(&vec![0.0; grid.len()], 0.05, &grid), 0.0);
    let grow: Vec<f64> = (0..grid.len()).map(|k| (0.05 * grid.t(k)).exp()).collect();
    assert_relative_eq!(discounted_integral(&grow, 0.05, &grid), 200.0, max_relative = 1e-9);

    let w = discount_weights(0.05, &grid, Quadrature::Exponential);
    let total: f64 = w.iter().sum();
    assert_relative_eq!(total, 20.0 * (1.0 - (-10.0f64).exp()), max_relative = 1e-10);
}

#[test]
fn stieltjes_cases() {
    let m = MonotonePath::new(vec![0.5, 0.5, 1.0, 2.0]).unwrap();
    assert_relative_eq!(stieltjes_integral(&[1.0; 4], &m).unwrap(), 2.0);
    let flat = MonotonePath::new(vec![0.7; 4]).unwrap();
    assert_relative_eq!(stieltjes_integral(&[3.0, 9.0, 9.0, 9.0], &flat).unwrap(), 2.1, max_relative = 1e-15);
    assert!(matches!(MonotonePath::new(vec![1.0, 0.9]), Err(Error::Monotonicity { step: 1, .. })));
}

#[test]
fn integration_by_parts_pathwise() {
    let s = spec(50.0, 5000, 0.3, DriftConvention::RawExponential)
        .with_channel(Channel::new(-0.75, 0.0))
        .with_extrema(ExtremaMode::Bridge);
    let e = Ensemble::new(s, 20, 5).unwrap();
    let (r, grid) = (0.05, s.grid);
    let disc: Vec<f64> = (0..grid.len()).map(|k| (-r * grid.t(k)).exp()).collect();
    let r_eff = -(-r * grid.dt()).exp_m1() / grid.dt();
    for i in 0..e.n_paths {
        let p = e.path(i);
        let theta: Vec<f64> = p.channel_inf(s.channel).iter().map(|z| (-z).exp()).collect();
        let mp = MonotonePath::new(theta.clone()).unwrap();
        let lhs = stieltjes_integral(&disc, &mp).unwrap();
        let rhs = disc[grid.n_steps()] * theta[grid.n_steps()] + r_eff * discounted_integral(&theta, r, &grid);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-9);
    }
}

#[test]
fn exponential_times() {
    let draws: Vec<f64> = (0..1_000_000u64).map(|i| sample_exponential_time(0.5, i)).collect();
    let est = McEstimate::from_samples(&draws).unwrap();
    assert!(est.within(2.0, 3.0), "{est:?}");
    assert_eq!(sample_exponential_time(1.0, 99), sample_exponential_time(1.0, 99));
    let surv: Vec<f64> =
        (0..200_000u64).map(|i| if sample_exponential_time(0.05, 1 << 40 | i) > 1.0 { 1.0 } else { 0.0 }).collect();
    let est = McEstimate::from_samples(&surv).unwrap();
    assert!(est.within((-0.05f64).exp(), 3.0), "{est:?}");
}

#[test]
fn exponential_supremum_law() {
    let r = 0.5;
    let sups: Vec<f64> = (0..200_000u64).map(|i| sup_before_exponential_time(r, i).1).collect();
    let est = McEstimate::from_samples(&sups).unwrap();
    assert!(est.within(1.0 / (2.0 * r).sqrt(), 3.0), "{est:?}");
    let rate = (2.0 * r).sqrt();
    let d = ks_one_sample(&sups, |x| 1.0 - (-rate * x).exp());
    assert!(d < ks_critical_1pct(sups.len(), usize::MAX), "{d}");
}

#[test]
fn mc_estimate_plumbing() {
    let est = McEstimate::from_samples(&[3.5; 100]).unwrap();
    assert_eq!(est.mean, 3.5);
    assert_eq!(est.std_error, 0.0);
    assert!(McEstimate::from_samples(&[]).is_err());

    let s = spec(1.0, 20, 0.3, DriftConvention::Martingale);
    let small = Ensemble::new(s, 20_000, 1).unwrap().estimate(|p| p.ex(20));
    let large = Ensemble::new(s, 40_000, 2).unwrap().estimate(|p| p.ex(20));
    let ratio = large.std_error / small.std_error;
    assert!((ratio * 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
}

#[test]
fn mean_vector_delta_method() {
    let rows: Vec<[f64; 2]> = (0..1000).map(|i| [i as f64, 2.0 * i as f64 + 1.0]).collect();
    let mv = MeanVector::from_rows(&rows).unwrap();
    assert_relative_eq!(mv.mean[0], 499.5);
    assert_relative_eq!(mv.mean[1], 1000.0);
    // y - 2x is constant
    assert!(mv.delta_std_error([-2.0, 1.0]) < 1e-9);
    assert_relative_eq!(mv.estimate(1).std_error, 2.0 * mv.estimate(0).std_error, max_relative = 1e-12);
}

#[test]
fn reflection_duality_on_grid() {
    let s = spec(1.0, 100, 1.0, DriftConvention::RawExponential);
    let a = Ensemble::new(s, 10_000, 21).unwrap();
    let b = Ensemble::new(s, 10_000, 22).unwrap();
    let gap = a.map_paths(|p| {
        let w = p.log_ex();
        w[100] - running_sup(w)[100]
    });
    let low = b.map_paths(|p| running_inf(p.log_ex())[100]);
    let d = ks_two_sample(&gap, &low);
    assert!(d < ks_critical_1pct(gap.len(), low.len()), "{d}");
}

#[test]
fn bridge_infimum_has_exact_law() {
    // inf of W over [0, 1] monitored on only 4 grid points
    let s = spec(1.0, 4, 1.0, DriftConvention::RawExponential).with_extrema(ExtremaMode::Bridge);
    let e = Ensemble::new(s, 20_000, 9).unwrap();
    let m = e.map_paths(|p| p.channel_inf(s.channel)[4]);
    let cdf = |x: f64| if x >= 0.0 { 1.0 } else { 2.0 * normal_cdf(x) };
    let d = ks_one_sample(&m, cdf);
    assert!(d < ks_critical_1pct(m.len(), usize::MAX), "bridge {d}");

    let g = Ensemble::new(s.with_extrema(ExtremaMode::Grid), 20_000, 9).unwrap();
    let m = g.map_paths(|p| p.channel_inf(s.channel)[4]);
    assert!(ks_one_sample(&m, cdf) > ks_critical_1pct(m.len(), usize::MAX));
}

#[test]
fn ks_two_sample_identical() {
    let a = [0.1, 0.4, 0.3];
    assert_eq!(ks_two_sample(&a, &a), 0.0);
    assert_relative_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
}

#[test]
fn step_minima_follow_the_bridge_law() {
    // a flat path: each step's minimum is minus a Rayleigh draw with mean sqrt(pi v / 8)
    let grid = TimeGrid::new(200.0, 20_000).unwrap();
    let flat = SamplePath::from_x_factor(grid, &vec![1.0; grid.len()], Channel::new(1.0, 0.0)).unwrap();
    let mins = flat.step_minima_log_ex(2.0);
    let v = 4.0 * grid.dt();
    let est = McEstimate::from_samples(&mins).unwrap();
    assert!(est.within(-(core::f64::consts::PI * v / 8.0).sqrt(), 3.0), "{est:?}");
    assert!(flat.step_minima_log_ex(0.0).iter().all(|m| *m == 0.0));

    let s = spec(10.0, 100, 0.3, DriftConvention::RawExponential);
    let e = Ensemble::new(s, 1, 8).unwrap();
    let path = e.path(0);
    let mins = path.step_minima_log_ex(0.3);
    for (m, w) in mins.iter().zip(path.log_ex().windows(2)) {
        assert!(*m <= w[0].min(w[1]));
    }
    let key = e.lineage(0).key();
    let restarted = SamplePath::generate_segments(
        &s,
        e.lineage(0),
        &[Segment { from_step: 0, key }, Segment { from_step: 50, key: Segment::restart_key(key, 50, 0) }],
    );
    assert_eq!(&restarted.step_minima_log_ex(0.3)[..50], &mins[..50]);
}
