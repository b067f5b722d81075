//! Monte Carlo checks of the first-order conditions of the planner and of
//! one agent in the contribution game.
//!
//! For a candidate policy `(x, C)` and multiplier `lambda` the conditions are
//!
//! - budget: expected discounted spending equals the endowment;
//! - binding private FOC: `gamma_i u_x(x_i, C) = lambda E_x` (planner) or
//!   `u_x(x_i, C) = lambda E_x` (agent) at every time;
//! - supergradient inequality: `Psi(t) <= lambda psi_c(t)` with
//!   `Psi(t) = E[ int_t^T e^(-rs) H(s) ds | F_t ]`, `H` the running
//!   utility density of the multiplier problem;
//! - flat-off: `E int (Psi - lambda psi_c) dC = 0`.
//!
//! Conditional expectations at a grid time are estimated by continuing a
//! prefix path with fresh suffixes. The flat-off residual needs no
//! conditioning: `dC(t)` is known at `t`, so `E[Psi(t) dC(t)]` equals the
//! expectation of the realised tail integral times `dC(t)`.

use alloc::format;
use alloc::vec::Vec;

use crate::closed_form::{PolicyPair, PolicySet};
use crate::error::{Error, Result};
use crate::math;
use crate::model::{ModelParams, UtilityContract};
use crate::paths::{discount_weights, par_map, Ensemble, McEstimate, Quadrature, SamplePath, Segment};


/// Whose conditions are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    /// The planner, with aggregate spending and welfare weights.
    Planner,
    /// Agent `i` of the game, facing the aggregate contribution.
    Agent(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocTolerance {
    /// Standard errors allowed on every Monte Carlo residual.
    pub n_sigma: f64,
    /// Relative error allowed in the binding private FOC.
    pub binding: f64,
}

impl Default for FocTolerance {
    fn default() -> Self {
        Self { n_sigma: 3.0, binding: 1e-8 }
    }
}

/// Where and how densely the supergradient inequality is scanned.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSettings {
    pub times: Vec<f64>,
    pub prefixes: usize,
    pub suffixes: usize,
}

impl ScanSettings {
    pub fn new(times: Vec<f64>, prefixes: usize, suffixes: usize) -> Self {
        Self { times, prefixes, suffixes }
    }
}

/// Average over prefixes of `Psi(t) - lambda psi_c(t)` at one scan time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub step: usize,
    pub t: f64,
    pub gap: McEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocReport {
    pub party: Party,
    /// Spending minus endowment.
    pub budget_residual: McEstimate,
    /// Largest scan gap in standard-error units, with the gap itself; a
    /// positive gap is a violation.
    pub max_inequality_violation: f64,
    pub violation_std_error: f64,
    pub violation_step: usize,
    pub violation_time: f64,
    pub scan: Vec<ScanPoint>,
    /// `E int (Psi - lambda psi_c) dC` of the party's own contributions.
    pub flatoff_residual: McEstimate,
    pub binding_foc_max_relerr: f64,
    pub verdict: Verdict,
}

impl FocReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Evaluates `H` and the party's own spending and contributions along one
/// path.
struct Frame<'a, U: ?Sized> {
    u: &'a U,
    p: &'a ModelParams,
    lambda: f64,
    party: Party,
}

impl<U: UtilityContract + ?Sized> Frame<'_, U> {
    fn density(&self, ex: f64, c: f64) -> f64 {
        match self.party {
            Party::Planner => self.p.weights.iter().map(|g| g * self.u.h(self.lambda * ex / g, c)).sum(),
            Party::Agent(_) => self.u.h(self.lambda * ex, c),
        }
    }

    fn own<'b>(&self, set: &'b PolicySet) -> Result<&'b PolicyPair> {
        match self.party {
            Party::Planner => Ok(&set.aggregate),
            Party::Agent(i) => set.agents.get(i).ok_or(Error::Index { index: i, len: set.agents.len() }),
        }
    }

    /// `sum_{j >= k} w_j H_j` for every `k` (the last entry is 0).
    fn tails(&self, path: &SamplePath, set: &PolicySet, w: &[f64]) -> Vec<f64> {
        let c = set.aggregate.contribution.values();
        let mut out = alloc::vec![0.0; path.len()];
        for k in (0..w.len()).rev() {
            out[k] = out[k + 1] + w[k] * self.density(path.ex(k), c[k]);
        }
        out
    }

    fn binding_relerr(&self, path: &SamplePath, set: &PolicySet) -> f64 {
        let c = set.aggregate.contribution.values();
        let mut worst = 0.0f64;
        let mut check = |x: &[f64], weight: f64| {
            for k in 0..path.len() {
                let rhs = self.lambda * path.ex(k);
                let e = (weight * self.u.u_x(x[k], c[k]) - rhs).abs() / rhs;
                worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
            }
        };
        match self.party {
            Party::Planner => {
                for (a, g) in set.agents.iter().zip(&self.p.weights) {
                    check(&a.consumption, *g);
                }
            }
            Party::Agent(i) => {
                if let Some(a) = set.agents.get(i) {
                    check(&a.consumption, 1.0);
                } else {
                    worst = f64::INFINITY;
                }
            }
        }
        worst
    }
}

fn spending(path: &SamplePath, own: &PolicyPair, w: &[f64], r: f64) -> f64 {
    let grid = path.grid();
    let c = own.contribution.values();
    let mut s = 0.0;
    for k in 0..w.len() {
        s += w[k] * path.ex(k) * own.consumption[k];
    }
    let mut prev = 0.0;
    for k in 0..path.len() {
        let dc = c[k] - prev;
        if dc > 0.0 {
            s += math::exp(-r * grid.t(k)) * path.ec(k) * dc;
        }
        prev = c[k];
    }
    s
}

/// Expected discounted spending of `party` under `policy`, minus `target`.
pub fn check_budget<F>(ensemble: &Ensemble, policy: F, p: &ModelParams, party: Party, target: f64) -> Result<McEstimate>
where
    F: Fn(&SamplePath) -> Result<PolicySet> + Sync + Send,
{
    let w = discount_weights(p.discount_rate, &ensemble.spec.grid, Quadrature::Exponential);
    let rows = ensemble.map(|i| -> Result<f64> {
        let path = ensemble.path(i);
        let set = policy(&path)?;
        let own = match party {
            Party::Planner => &set.aggregate,
            Party::Agent(a) => set.agents.get(a).ok_or(Error::Index { index: a, len: set.agents.len() })?,
        };
        Ok(spending(&path, own, &w, p.discount_rate) - target)
    });
    McEstimate::from_samples(&rows.into_iter().collect::<Result<Vec<f64>>>()?)
}

/// `E[ int_t^T e^(-rs) H(s) ds | F_t ]` on the prefix of path `prefix` up
/// to grid time `t`, from `suffixes` fresh continuations.
#[allow(clippy::too_many_arguments)]
pub fn supergradient_estimate<U, F>(
    ensemble: &Ensemble,
    policy: F,
    u: &U,
    p: &ModelParams,
    party: Party,
    lambda: f64,
    t: f64,
    prefix: usize,
    suffixes: usize,
) -> Result<McEstimate>
where
    U: UtilityContract + ?Sized,
    F: Fn(&SamplePath) -> Result<PolicySet> + Sync + Send,
{
    let grid = ensemble.spec.grid;
    let k = grid.index_of(t).ok_or_else(|| Error::Config(format!("time {t} is not on the simulation grid")))?;
    if suffixes == 0 {
        return Err(Error::Config("need at least one suffix".into()));
    }
    let frame = Frame { u, p, lambda, party };
    let w = discount_weights(p.discount_rate, &grid, Quadrature::Exponential);
    let vals = restarted(ensemble, prefix, k, suffixes, |path| {
        let set = policy(path)?;
        Ok(frame.tails(path, &set, &w)[k])
    })?;
    McEstimate::from_samples(&vals)
}

/// Runs `f` on `count` continuations of path `prefix` after step `k`.
fn restarted<T: Send, G>(ensemble: &Ensemble, prefix: usize, k: usize, count: usize, f: G) -> Result<Vec<T>>
where
    G: Fn(&SamplePath) -> Result<T> + Sync + Send,
{
    let lineage = ensemble.lineage(prefix);
    let key = lineage.key();
    par_map(count, |j| {
        let segs = [Segment { from_step: 0, key }, Segment { from_step: k, key: Segment::restart_key(key, k, j as u64) }];
        f(&SamplePath::generate_segments(&ensemble.spec, lineage, &segs))
    })
    .into_iter()
    .collect()
}

/// Checks every first-order condition of `party` for `policy` at
/// multiplier `lambda` against the budget `target`.
#[allow(clippy::too_many_arguments)]
pub fn check_foc<U, F>(
    ensemble: &Ensemble,
    policy: F,
    u: &U,
    p: &ModelParams,
    party: Party,
    lambda: f64,
    target: f64,
    scan: &ScanSettings,
    tol: &FocTolerance,
) -> Result<FocReport>
where
    U: UtilityContract + ?Sized,
    F: Fn(&SamplePath) -> Result<PolicySet> + Sync + Send,
{
    let grid = ensemble.spec.grid;
    if scan.prefixes < 2 || scan.suffixes == 0 || scan.times.is_empty() {
        return Err(Error::Config(format!(
            "scan needs at least two prefixes, one suffix and one time, got {scan:?}"
        )));
    }
    if scan.prefixes > ensemble.n_paths {
        return Err(Error::Config("more scan prefixes than ensemble paths".into()));
    }
    let steps = scan
        .times
        .iter()
        .map(|t| grid.index_of(*t).ok_or_else(|| Error::Config(format!("scan time {t} is not on the grid"))))
        .collect::<Result<Vec<usize>>>()?;
    let frame = Frame { u, p, lambda, party };
    let r = p.discount_rate;
    let w = discount_weights(r, &grid, Quadrature::Exponential);

    // budget, flat-off and binding FOC on whole paths
    let rows = ensemble.map(|i| -> Result<(f64, f64, f64)> {
        let path = ensemble.path(i);
        let set = policy(&path)?;
        let own = frame.own(&set)?;
        let tails = frame.tails(&path, &set, &w);
        let c = own.contribution.values();
        let mut flat = 0.0;
        let mut prev = 0.0;
        for k in 0..path.len() {
            let dc = c[k] - prev;
            if dc > 0.0 {
                flat += (tails[k] - lambda * math::exp(-r * grid.t(k)) * path.ec(k)) * dc;
            }
            prev = c[k];
        }
        Ok((spending(&path, own, &w, r) - target, flat, frame.binding_relerr(&path, &set)))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let budget = McEstimate::from_samples(&rows.iter().map(|r| r.0).collect::<Vec<_>>())?;
    let flatoff = McEstimate::from_samples(&rows.iter().map(|r| r.1).collect::<Vec<_>>())?;
    let binding = rows.iter().fold(0.0f64, |a, r| if r.2.is_nan() { f64::INFINITY } else { a.max(r.2) });

    // supergradient inequality, prefix-averaged at each scan time
    let mut points = Vec::with_capacity(steps.len());
    for (&k, &t) in steps.iter().zip(&scan.times) {
        let mut gaps = Vec::with_capacity(scan.prefixes);
        for pre in 0..scan.prefixes {
            let vals = restarted(ensemble, pre, k, scan.suffixes, |path| {
                let set = policy(path)?;
                let rhs = lambda * math::exp(-r * grid.t(k)) * path.ec(k);
                Ok(frame.tails(path, &set, &w)[k] - rhs)
            })?;
            gaps.push(vals.iter().sum::<f64>() / vals.len() as f64);
        }
        points.push(ScanPoint { step: k, t, gap: McEstimate::from_samples(&gaps)? });
    }
    let worst = points
        .iter()
        .max_by(|a, b| scan_score(a).total_cmp(&scan_score(b)))
        .expect("at least one scan time");

    let ok = |e: &McEstimate| e.mean.is_finite() && e.mean.abs() <= tol.n_sigma * e.std_error;
    let inequality_ok = points.iter().all(|s| s.gap.mean.is_finite() && s.gap.mean <= tol.n_sigma * s.gap.std_error);
    let pass = ok(&budget) && ok(&flatoff) && inequality_ok && binding <= tol.binding;
    Ok(FocReport {
        party,
        budget_residual: budget,
        max_inequality_violation: worst.gap.mean,
        violation_std_error: worst.gap.std_error,
        violation_step: worst.step,
        violation_time: worst.t,
        scan: points,
        flatoff_residual: flatoff,
        binding_foc_max_relerr: binding,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
    })
}

fn scan_score(s: &ScanPoint) -> f64 {
    let z = s.gap.z_score(0.0);
    if z.is_nan() {
        f64::INFINITY
    } else {
        z
    }
}

/// Planner conditions against the aggregate endowment `n w`.
pub fn check_foc_social<U, F>(
    ensemble: &Ensemble,
    policy: F,
    u: &U,
    p: &ModelParams,
    lambda: f64,
    scan: &ScanSettings,
    tol: &FocTolerance,
) -> Result<FocReport>
where
    U: UtilityContract + ?Sized,
    F: Fn(&SamplePath) -> Result<PolicySet> + Sync + Send,
{
    check_foc(ensemble, policy, u, p, Party::Planner, lambda, p.n_agents as f64 * p.wealth, scan, tol)
}

/// Conditions of agent `agent` against its endowment `w`, given the others'
/// contributions contained in the policy's aggregate.
#[allow(clippy::too_many_arguments)]
pub fn check_foc_nash<U, F>(
    ensemble: &Ensemble,
    policy: F,
    agent: usize,
    u: &U,
    p: &ModelParams,
    lambda: f64,
    scan: &ScanSettings,
    tol: &FocTolerance,
) -> Result<FocReport>
where
    U: UtilityContract + ?Sized,
    F: Fn(&SamplePath) -> Result<PolicySet> + Sync + Send,
{
    check_foc(ensemble, policy, u, p, Party::Agent(agent), lambda, p.wealth, scan, tol)
}
