//! Explicit solutions for Cobb-Douglas utilities with equal weights.
//!
//! With `c' = alpha / (1 - alpha - beta)`, `a1 = (1 - alpha) / (1 - alpha - beta)`
//! and `q = alpha / (1 - alpha)`, every path functional below is driven by
//! the running infimum of the single channel `Z = log E_c + q log E_x`:
//!
//! ```text
//! theta(t) = exp(-a1 inf_{s<=t} Z(s))
//! gamma(t) = (1/A) [((a+b)/a) E_x(t) theta(t)^(-b)]^(-1/(1-a))
//! A        = E int delta e^(-ru) inf_{s<=u} E_c(s) E_x(u-s)^(-q) du
//! ```
//!
//! The planner contributes `C* = l0 theta` and each agent consumes
//! `l0 gamma / n`; in the symmetric Nash equilibrium each agent contributes
//! `kappa theta / n` and consumes `kappa gamma`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::math;
use crate::model::{ModelParams, ValidationMode};
use crate::paths::{
    discount_weights, two_time_inf, walk, Channel, DriftConvention, Ensemble, ExtremaMode, FactorSpec, McEstimate,
    MeanVector, MonotonePath, PathPoint, PathSpec, Quadrature, SamplePath, Segment, TimeGrid,
};

/// Exponents shared by the explicit formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    /// `alpha / (1 - alpha - beta)`.
    pub c_prime: f64,
    /// `(1 - alpha) / (1 - alpha - beta)`.
    pub a1: f64,
    /// `alpha / (1 - alpha)`.
    pub q: f64,
    pub delta: f64,
    /// `((alpha + beta) / alpha)^(-1 / (1 - alpha))`.
    pub gamma_scale: f64,
}

impl Exponents {
    pub fn new(p: &ModelParams) -> Self {
        let (a, b) = (p.alpha, p.beta);
        let s = 1.0 - a - b;
        Self {
            c_prime: a / s,
            a1: (1.0 - a) / s,
            q: a / (1.0 - a),
            delta: b / a * math::powf((a + b) / a, 1.0 / (a - 1.0)),
            gamma_scale: math::powf((a + b) / a, -1.0 / (1.0 - a)),
        }
    }
}

/// The channel whose running infimum drives `theta`, `gamma` and `A`.
pub fn theta_channel(p: &ModelParams) -> Channel {
    Channel::new(Exponents::new(p).q, 1.0)
}

/// Path spec for the model's factors with the `theta` channel monitored.
pub fn path_spec(p: &ModelParams, grid: TimeGrid, convention: DriftConvention, extrema: ExtremaMode) -> Result<PathSpec> {
    Ok(PathSpec::new(grid, FactorSpec::new(p.sigma_x, convention)?, FactorSpec::new(p.sigma_c, convention)?)
        .with_channel(theta_channel(p))
        .with_extrema(extrema))
}

fn require_equal_weights(p: &ModelParams) -> Result<()> {
    p.check(ValidationMode::General)?;
    if !p.has_equal_weights() {
        return Err(domain("explicit solutions assume equal welfare weights 1/n"));
    }
    Ok(())
}

/// `theta(t) = sup_{s<=t} E_c(s)^(-a1) E_x(s)^(-c')`, with `theta(0) = 1`
/// as the atom at time 0.
pub fn theta_path(sample: &SamplePath, p: &ModelParams) -> MonotonePath {
    let e = Exponents::new(p);
    let z = sample.channel_inf(theta_channel(p));
    MonotonePath::new(z.iter().map(|m| math::exp(-e.a1 * m)).collect()).expect("running sup is nondecreasing")
}

/// `gamma(t)` for the constant `a`.
pub fn gamma_path(sample: &SamplePath, p: &ModelParams, a: f64) -> Result<Vec<f64>> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(domain(alloc::format!("A must be positive, got {a}")));
    }
    let e = Exponents::new(p);
    let z = sample.channel_inf(theta_channel(p));
    let k = e.gamma_scale / a;
    let s = 1.0 - p.alpha;
    Ok(sample.log_ex().iter().zip(&z).map(|(lx, m)| k * math::exp(-(lx + p.beta * e.a1 * m) / s)).collect())
}

/// Pathwise estimator of `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AEstimator {
    /// The defining two-time infimum on grid points, with `E_x(u - s)` read
    /// at the shifted index. `O(N^2)` per path unless `sigma_c = 0`.
    ShiftedIndex,
    /// `E_x(u)^(-q) exp(inf_{s<=u} Z(s))`, equal in law for every `u` when
    /// the drivers are independent; uses the path's monitored infimum.
    TimeReversed,
}

/// Bound on the part of `A` beyond `t_max`, using `inf <= E_c(u)`.
fn a_tail_bound(p: &ModelParams, spec: &PathSpec) -> f64 {
    let e = Exponents::new(p);
    let growth = match spec.c.convention {
        DriftConvention::Martingale => 0.0,
        DriftConvention::RawExponential => 0.5 * p.sigma_c * p.sigma_c,
    };
    let rate = p.discount_rate - growth;
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    e.delta * math::exp(-rate * spec.grid.t_max()) / rate
}

/// Monte Carlo estimate of `A` over the ensemble's horizon.
pub fn estimate_a_mc(ensemble: &Ensemble, p: &ModelParams, estimator: AEstimator) -> Result<McEstimate> {
    p.check(ValidationMode::General)?;
    let spec = ensemble.spec;
    let e = Exponents::new(p);
    let grid = spec.grid;
    let w = discount_weights(p.discount_rate, &grid, Quadrature::Exponential);
    let samples = match estimator {
        AEstimator::TimeReversed => {
            if spec.channel != theta_channel(p) {
                return Err(Error::Config("ensemble does not monitor the theta channel".into()));
            }
            ensemble.map(|i| {
                let mut acc = 0.0;
                ensemble.walk(i, |pt| {
                    if pt.k < grid.n_steps() {
                        acc += w[pt.k] * math::exp(pt.z_inf - e.q * pt.log_ex);
                    }
                });
                e.delta * acc
            })
        }
        AEstimator::ShiftedIndex => ensemble.map(|i| {
            let path = ensemble.path(i);
            let n = grid.n_steps();
            let mut acc = 0.0;
            if p.sigma_c == 0.0 {
                let mut sup = f64::NEG_INFINITY;
                for (k, wk) in w.iter().enumerate().take(n) {
                    sup = sup.max(path.log_ex()[k]);
                    acc += wk * math::exp(-e.q * sup);
                }
            } else {
                for (k, wk) in w.iter().enumerate().take(n) {
                    acc += wk * two_time_inf(&path, &path, e.q, k).expect("index on grid");
                }
            }
            e.delta * acc
        }),
    };
    Ok(McEstimate::from_samples(&samples)?.with_truncation_bound(a_tail_bound(p, &spec)))
}

fn bs_sides(p: &ModelParams) -> Result<(f64, f64)> {
    p.check(ValidationMode::BlackScholes)?;
    Ok(p.finiteness_sides())
}

/// `A = (delta / r) sqrt(2r) / (sqrt(2r) + sigma alpha / (1 - alpha))`.
pub fn analytic_a_bs(p: &ModelParams) -> Result<f64> {
    let (s2r, _) = bs_sides(p)?;
    let e = Exponents::new(p);
    Ok(e.delta / p.discount_rate * s2r / (s2r + p.sigma_x * e.q))
}

/// `I_theta = E int_[0,inf) e^(-rt) d theta = sqrt(2r) / (sqrt(2r) - sigma c')`.
pub fn analytic_i_theta_bs(p: &ModelParams) -> Result<f64> {
    let (s2r, rhs) = bs_sides(p)?;
    Ok(s2r / (s2r - rhs))
}

/// `I_gamma = E int e^(-rt) E_x gamma dt = (alpha / beta) I_theta`.
pub fn analytic_i_gamma_bs(p: &ModelParams) -> Result<f64> {
    Ok(p.alpha / p.beta * analytic_i_theta_bs(p)?)
}

/// Simulation settings for Monte Carlo constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub master_seed: u64,
    pub convention: DriftConvention,
    pub extrema: ExtremaMode,
}

impl McSettings {
    pub fn new(grid: TimeGrid, n_paths: usize, master_seed: u64) -> Self {
        Self { grid, n_paths, master_seed, convention: DriftConvention::RawExponential, extrema: ExtremaMode::Bridge }
    }

    pub fn ensemble(&self, p: &ModelParams) -> Result<Ensemble> {
        Ensemble::new(path_spec(p, self.grid, self.convention, self.extrema)?, self.n_paths, self.master_seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    AnalyticBs,
    MonteCarlo(McSettings),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    AnalyticBs,
    MonteCarlo,
}

/// Standard errors of Monte Carlo constants (delta method for ratios).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstantErrors {
    pub a: f64,
    pub i_theta: f64,
    pub i_gamma: f64,
    pub l0: f64,
    pub kappa: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplicitConstants {
    pub a: f64,
    pub l0: f64,
    pub kappa: f64,
    pub lambda_sp: f64,
    pub lambda_nash: f64,
    /// `E int_[0,T] psi_c d theta`, atom included.
    pub i_theta: f64,
    /// `E int_0^T psi_x gamma dt`.
    pub i_gamma: f64,
    pub method: MethodKind,
    pub std_errors: Option<ConstantErrors>,
    /// Some relative standard error exceeds 0.5.
    pub divergence_warning: bool,
    /// `kappa / l0`. Analytic constants keep it in the reduced form
    /// `(alpha + beta) / (n alpha + beta)`, free of the rounding in the
    /// integrals, so it is the same for every volatility.
    pub kappa_over_l0: f64,
    /// Truncation bound on `A` and the estimated boundary term
    /// `E e^(-rT) psi_c theta(T)` left out of `I_theta`.
    pub truncation: (f64, f64),
}

impl ExplicitConstants {
    /// `kappa / l0`.
    pub fn ratio(&self) -> f64 {
        self.kappa_over_l0
    }

    fn from_integrals(p: &ModelParams, a: f64, i_theta: f64, i_gamma: f64, method: MethodKind) -> Self {
        let n = p.n_agents as f64;
        let l0 = n * p.wealth / (i_gamma + i_theta);
        let kappa = p.wealth / (i_gamma + i_theta / n);
        let (lambda_sp, lambda_nash) = multipliers(p, a, l0, kappa);
        let kappa_over_l0 = match method {
            MethodKind::AnalyticBs => (p.alpha + p.beta) / (n * p.alpha + p.beta),
            MethodKind::MonteCarlo => kappa / l0,
        };
        Self {
            a,
            l0,
            kappa,
            kappa_over_l0,
            lambda_sp,
            lambda_nash,
            i_theta,
            i_gamma,
            method,
            std_errors: None,
            divergence_warning: false,
            truncation: (0.0, 0.0),
        }
    }

    /// Planner and Nash multipliers recomputed for a different `A`, `l0`
    /// or `kappa` (as when a policy is rescaled).
    pub fn with_levels(&self, p: &ModelParams, l0: f64, kappa: f64) -> Self {
        let (lambda_sp, lambda_nash) = multipliers(p, self.a, l0, kappa);
        Self { l0, kappa, lambda_sp, lambda_nash, kappa_over_l0: kappa / l0, ..*self }
    }
}

/// `(n^(-alpha) A^(1-alpha) l0^(alpha+beta-1), A^(1-alpha) kappa^(alpha+beta-1))`.
pub fn multipliers(p: &ModelParams, a: f64, l0: f64, kappa: f64) -> (f64, f64) {
    let (al, be) = (p.alpha, p.beta);
    let n = p.n_agents as f64;
    let base = math::powf(a, 1.0 - al);
    (math::powf(n, -al) * base * math::powf(l0, al + be - 1.0), base * math::powf(kappa, al + be - 1.0))
}

/// Per-path integrands `[A, I_theta, J, boundary]` where `J` is the
/// `psi_x gamma` spending integral for `A = 1` and `boundary` is
/// `e^(-rT) psi_c(T) theta(T)`.
pub fn constant_integrands(spec: &PathSpec, segments: &[Segment], p: &ModelParams, tables: &DiscountTables) -> [f64; 4] {
    let e = Exponents::new(p);
    let j_coef = -p.beta * e.a1 / (1.0 - p.alpha);
    let (mut a_acc, mut j_acc, mut i_theta) = (0.0, 0.0, 0.0);
    // sum of w_k E_x^(-q) since the infimum last moved
    let mut pending = 0.0;
    let mut z_last = f64::NAN;
    let (mut exp_z, mut exp_j, mut theta) = (0.0, 0.0, 0.0);
    let mut ex_q = 1.0;
    let last = walk(
        spec,
        segments,
        #[inline(always)]
        |pt: &PathPoint| {
            // E_x^(-q) by increments, resynchronised periodically
            ex_q = if pt.k & 4095 == 0 { math::exp(-e.q * pt.log_ex) } else { ex_q * math::exp_small(-e.q * pt.dlog_ex) };
            if pt.z_inf != z_last {
                a_acc += pending * exp_z;
                j_acc += pending * exp_j;
                pending = 0.0;
                z_last = pt.z_inf;
                exp_z = math::exp(pt.z_inf);
                exp_j = math::exp(j_coef * pt.z_inf);
                let th = math::exp(-e.a1 * pt.z_inf);
                let psi_c = if pt.log_ec == 0.0 { tables.disc[pt.k] } else { tables.disc[pt.k] * math::exp(pt.log_ec) };
                i_theta += psi_c * (th - theta);
                theta = th;
            }
            pending += tables.weight[pt.k] * ex_q;
        },
    );
    a_acc += pending * exp_z;
    j_acc += pending * exp_j;
    let n = spec.grid.n_steps();
    let boundary = tables.disc[n] * math::exp(last.log_ec) * theta;
    [e.delta * a_acc, i_theta, e.gamma_scale * j_acc, boundary]
}

/// Discount factors `e^(-r t_k)` and exponential quadrature weights, both
/// with one entry per grid point (the last weight is 0).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountTables {
    pub disc: Vec<f64>,
    pub weight: Vec<f64>,
}

impl DiscountTables {
    pub fn new(r: f64, grid: &TimeGrid) -> Self {
        let mut weight = discount_weights(r, grid, Quadrature::Exponential);
        weight.push(0.0);
        Self { disc: (0..grid.len()).map(|k| math::exp(-r * grid.t(k))).collect(), weight }
    }
}

/// Constants `A`, `l0`, `kappa` and the multipliers.
pub fn constants(p: &ModelParams, method: Method) -> Result<ExplicitConstants> {
    require_equal_weights(p)?;
    match method {
        Method::AnalyticBs => {
            let a = analytic_a_bs(p)?;
            let it = analytic_i_theta_bs(p)?;
            Ok(ExplicitConstants::from_integrals(p, a, it, p.alpha / p.beta * it, MethodKind::AnalyticBs))
        }
        Method::MonteCarlo(s) => {
            let ens = s.ensemble(p)?;
            let tables = DiscountTables::new(p.discount_rate, &s.grid);
            let rows = ens.map(|i| {
                let seg = [Segment { from_step: 0, key: ens.lineage(i).key() }];
                constant_integrands(&ens.spec, &seg, p, &tables)
            });
            let mv = MeanVector::from_rows(&rows)?;
            Ok(mc_constants(p, &mv, a_tail_bound(p, &ens.spec)))
        }
    }
}

/// Constants and delta-method errors from the means of
/// [`constant_integrands`].
pub fn mc_constants(p: &ModelParams, mv: &MeanVector<4>, a_tail: f64) -> ExplicitConstants {
    let [a, it, j, boundary] = mv.mean;
    let n = p.n_agents as f64;
    let w = p.wealth;
    let ig = j / a;
    let mut c = ExplicitConstants::from_integrals(p, a, it, ig, MethodKind::MonteCarlo);
    // gradients with respect to (A, I_theta, J)
    let dig = [-j / (a * a), 0.0, 1.0 / a, 0.0];
    let s = ig + it;
    let l0_grad = [-n * w / (s * s) * dig[0], -n * w / (s * s), -n * w / (s * s) * dig[2], 0.0];
    let sk = ig + it / n;
    let k_grad = [-w / (sk * sk) * dig[0], -w / (sk * sk) / n, -w / (sk * sk) * dig[2], 0.0];
    // ratio = (ig + it) / (n ig + it)
    let den = n * ig + it;
    let dr_dig = (den - n * s) / (den * den);
    let dr_dit = (den - s) / (den * den);
    let r_grad = [dr_dig * dig[0], dr_dit, dr_dig * dig[2], 0.0];
    let errs = ConstantErrors {
        a: mv.estimate(0).std_error,
        i_theta: mv.estimate(1).std_error,
        i_gamma: mv.delta_std_error(dig),
        l0: mv.delta_std_error(l0_grad),
        kappa: mv.delta_std_error(k_grad),
        ratio: mv.delta_std_error(r_grad),
    };
    c.divergence_warning = [(errs.a, a), (errs.i_theta, it), (errs.i_gamma, ig)].iter().any(|(e, m)| *e > 0.5 * m.abs());
    c.std_errors = Some(errs);
    c.truncation = (a_tail, boundary);
    c
}

/// Who a policy belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    SocialPlannerAgent(usize),
    NashAgent(usize),
    Aggregate,
}

/// Consumption path and cumulative contribution of one owner.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPair {
    pub consumption: Vec<f64>,
    pub contribution: MonotonePath,
    pub owner: Owner,
}

/// Per-agent policies plus the aggregate (total consumption, total
/// contribution).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySet {
    pub agents: Vec<PolicyPair>,
    pub aggregate: PolicyPair,
}

/// Planner policy: `C* = l0 theta`, `x*_i = l0 gamma / n`.
pub fn sp_policy(sample: &SamplePath, c: &ExplicitConstants, p: &ModelParams) -> Result<PolicySet> {
    require_equal_weights(p)?;
    let theta = theta_path(sample, p);
    let gamma = gamma_path(sample, p, c.a)?;
    let n = p.n_agents;
    let xi: Vec<f64> = gamma.iter().map(|g| c.l0 * g / n as f64).collect();
    let agents = (0..n)
        .map(|i| PolicyPair { consumption: xi.clone(), contribution: theta.scaled(c.l0 / n as f64), owner: Owner::SocialPlannerAgent(i) })
        .collect();
    let aggregate = PolicyPair {
        consumption: gamma.iter().map(|g| c.l0 * g).collect(),
        contribution: theta.scaled(c.l0),
        owner: Owner::Aggregate,
    };
    Ok(PolicySet { agents, aggregate })
}

/// Symmetric Nash policy: `C_i = kappa theta / n`, `x_i = kappa gamma`.
pub fn nash_policy(sample: &SamplePath, c: &ExplicitConstants, p: &ModelParams) -> Result<PolicySet> {
    require_equal_weights(p)?;
    let theta = theta_path(sample, p);
    let gamma = gamma_path(sample, p, c.a)?;
    let n = p.n_agents;
    let xi: Vec<f64> = gamma.iter().map(|g| c.kappa * g).collect();
    let agents = (0..n)
        .map(|i| PolicyPair { consumption: xi.clone(), contribution: theta.scaled(c.kappa / n as f64), owner: Owner::NashAgent(i) })
        .collect();
    let aggregate = PolicyPair {
        consumption: gamma.iter().map(|g| n as f64 * c.kappa * g).collect(),
        contribution: theta.scaled(c.kappa),
        owner: Owner::Aggregate,
    };
    Ok(PolicySet { agents, aggregate })
}

/// `(alpha + beta) / (n alpha + beta)`.
pub fn free_rider_ratio(p: &ModelParams) -> Result<f64> {
    p.check(ValidationMode::General)?;
    Ok((p.alpha + p.beta) / (p.n_agents as f64 * p.alpha + p.beta))
}

/// Frictionless benchmark where contributions can be withdrawn and the
/// public good is rented at the user cost `r psi_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversibleBenchmark {
    pub lambda_star: f64,
    pub lambda_tilde: f64,
    pub x_star_i: Vec<f64>,
    pub c_star: Vec<f64>,
    pub x_tilde_i: Vec<f64>,
    pub c_tilde: Vec<f64>,
    /// `C~ / C*`, constant along the path.
    pub ratio: f64,
}

/// `E int e^(-rt) E_x(t)^(-c') dt` in closed form.
pub fn reversible_discount_integral(p: &ModelParams, convention: DriftConvention) -> Result<f64> {
    let c = Exponents::new(p).c_prime;
    let s2 = p.sigma_x * p.sigma_x;
    let growth = match convention {
        DriftConvention::RawExponential => 0.5 * s2 * c * c,
        DriftConvention::Martingale => 0.5 * s2 * c * (c + 1.0),
    };
    let rate = p.discount_rate - growth;
    if rate <= 0.0 {
        return Err(Error::Finiteness { lhs: math::sqrt(2.0 * p.discount_rate), rhs: math::sqrt(2.0 * growth) });
    }
    Ok(1.0 / rate)
}

/// Planner and Nash solutions of the reversible problem along `sample`.
pub fn reversible_benchmark(sample: &SamplePath, p: &ModelParams, convention: DriftConvention) -> Result<ReversibleBenchmark> {
    require_equal_weights(p)?;
    if p.sigma_c != 0.0 {
        return Err(domain("the reversible benchmark takes the public good as numeraire (sigma_c = 0)"));
    }
    let (al, be, r) = (p.alpha, p.beta, p.discount_rate);
    let n = p.n_agents as f64;
    let e = Exponents::new(p);
    let big_r = reversible_discount_integral(p, convention)?;
    // C*(t) = L* (n E_x)^(-c'), budget ((a+b)/b) r E int e^(-rt) C* = n w
    let l_star = n * p.wealth * be / ((al + be) * r * big_r * math::powf(n, -e.c_prime));
    // C~(t) = L~ E_x^(-c'), budget r ((n a + b)/(n b)) E int e^(-rt) C~ = w
    let l_tilde = p.wealth * n * be / (r * (n * al + be) * big_r);
    let scale = (al + be) / al * math::powf(r * al / be, 1.0 - al);
    let s = 1.0 - al - be;
    let lambda_star = math::powf(l_star, -s) / scale;
    let lambda_tilde = math::powf(l_tilde, -s) / scale;

    let len = sample.len();
    let (mut xs, mut cs, mut xt, mut ct) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    for (k, lx) in sample.log_ex().iter().enumerate() {
        let ex = math::exp(*lx);
        let base = math::exp(-e.c_prime * lx);
        cs[k] = l_star * math::powf(n, -e.c_prime) * base;
        xs[k] = r * al / (be * n * ex) * cs[k];
        ct[k] = l_tilde * base;
        xt[k] = r * al / (be * ex) * ct[k];
    }
    Ok(ReversibleBenchmark {
        lambda_star,
        lambda_tilde,
        x_star_i: xs,
        c_star: cs,
        x_tilde_i: xt,
        c_tilde: ct,
        ratio: l_tilde / (l_star * math::powf(n, -e.c_prime)),
    })
}
