//! Backward induction for the signal process on a recombining binomial
//! lattice.
//!
//! At every node the signal `l` solves
//!
//! ```text
//! E[ sum_{i >= k} w_i H(E_x(i), M_i) | node ] = lambda psi_c(t_k),   M_k = l,
//! ```
//!
//! where `M` is the running maximum of the signal from the node on and
//! `H(e, m) = sum_i gamma_i h(lambda e / gamma_i, m)` for the planner or
//! `h(lambda e, m)` for one agent of the symmetric game (`m` is then the
//! aggregate level). The conditional sum, seen as a function `V(m)` of the
//! running maximum, is tabulated per node on a logarithmic grid that starts
//! at the node's own signal, and interpolated linearly in `(log m, log V)`.
//!
//! Between nodes the continuous driver wanders past the walk's extremes by
//! about half a step, so by default a node's signal enters the running
//! maximum as its value half a driver step towards the larger neighbour
//! (geometric interpolation between neighbours).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::closed_form::{Owner, PolicyPair, PolicySet};
use crate::error::{Error, Result};
use crate::math;
use crate::model::{ModelParams, UtilityContract, ValidationMode};
use crate::paths::{par_map, DriftConvention, ExtremaMode, FactorSpec, MonotonePath, SamplePath, TimeGrid};

#[cfg(test)]
mod tests;

/// Largest lattice accepted by [`build_lattice`].
pub const MAX_LATTICE_STEPS: usize = 5000;

/// Recombining binomial lattice for the Brownian driver, with `W` moving by
/// `+-sqrt(dt)` with probability 1/2 each. Both factors are functions of
/// `W`, so a volatile `E_c` shares the driver of `E_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    grid: TimeGrid,
    step: f64,
    x: FactorSpec,
    c: FactorSpec,
    // per-step log corrections making the factors one-step martingales
    corr_x: f64,
    corr_c: f64,
    discount_rate: f64,
}

pub fn build_lattice(p: &ModelParams, grid: TimeGrid, convention: DriftConvention) -> Result<Lattice> {
    p.check(ValidationMode::General)?;
    if grid.n_steps() > MAX_LATTICE_STEPS {
        return Err(Error::Config(format!(
            "lattice of {} steps exceeds the limit of {MAX_LATTICE_STEPS}",
            grid.n_steps()
        )));
    }
    let step = math::sqrt(grid.dt());
    let x = FactorSpec::new(p.sigma_x, convention)?;
    let c = FactorSpec::new(p.sigma_c, convention)?;
    let corr = |f: &FactorSpec| match convention {
        DriftConvention::Martingale => math::ln(math::cosh(f.sigma * step)),
        DriftConvention::RawExponential => 0.0,
    };
    Ok(Lattice { grid, step, corr_x: corr(&x), corr_c: corr(&c), x, c, discount_rate: p.discount_rate })
}

impl Lattice {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn convention(&self) -> DriftConvention {
        self.x.convention
    }

    /// Driver value `(2j - k) sqrt(dt)` at node `j` of step `k`.
    pub fn w(&self, k: usize, j: usize) -> f64 {
        (2.0 * j as f64 - k as f64) * self.step
    }

    pub fn ex(&self, k: usize, j: usize) -> f64 {
        math::exp(self.x.sigma * self.w(k, j) - k as f64 * self.corr_x)
    }

    pub fn ec(&self, k: usize, j: usize) -> f64 {
        math::exp(self.c.sigma * self.w(k, j) - k as f64 * self.corr_c)
    }

    /// `e^(-r t_k) E_c`.
    pub fn psi_c(&self, k: usize, j: usize) -> f64 {
        math::exp(-self.discount_rate * self.grid.t(k)) * self.ec(k, j)
    }

    /// Exact integral of `e^(-rt)` over `[t_k, t_k + dt]`; the last step
    /// carries one interval too.
    pub fn weight(&self, k: usize) -> f64 {
        let (r, dt) = (self.discount_rate, self.grid.dt());
        math::exp(-r * self.grid.t(k)) * (-math::exp_m1(-r * dt)) / r
    }

    /// Node of step `k` nearest to driver value `w`, and the distance.
    pub fn nearest_node(&self, k: usize, w: f64) -> (usize, f64) {
        let j = math::round((w / self.step + k as f64) / 2.0).clamp(0.0, k as f64) as usize;
        (j, w - self.w(k, j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    SocialPlanner,
    /// One agent of the symmetric game; the signal is per agent and the
    /// aggregate level is `n` times its running supremum.
    NashSymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Spacing of the global running-maximum grid in `log m`.
    pub m_step: f64,
    /// Grid points stored above each node's signal; beyond them `V` is
    /// extrapolated as a power law.
    pub m_points: usize,
    /// Half-step continuity correction of the running maximum.
    pub overshoot: bool,
    /// Relative residual accepted at every node.
    pub tol: f64,
    pub max_iter: usize,
    pub max_expansions: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            m_step: 0.05,
            m_points: 240,
            overshoot: true,
            tol: 1e-8,
            max_iter: 200,
            max_expansions: 200,
        }
    }
}

impl SolverOptions {
    fn check(&self) -> Result<()> {
        if self.m_points < 2 || !(self.m_step > 0.0) || !(self.tol > 0.0) {
            return Err(Error::Config(format!("invalid solver options {self:?}")));
        }
        Ok(())
    }
}

/// Signal table on the lattice, `l*(k, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSolution {
    pub mode: SolveMode,
    pub lambda: f64,
    n_agents: usize,
    n_steps: usize,
    // log of the aggregate level, step-major
    log_level: Vec<f64>,
    residual: Vec<f64>,
    options: SolverOptions,
}

#[inline]
fn offset(k: usize) -> usize {
    k * (k + 1) / 2
}

impl SignalSolution {
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Signal in the units of the mode (per agent for the game).
    pub fn l_star(&self, k: usize, j: usize) -> f64 {
        self.aggregate(k, j) / self.share_divisor()
    }

    /// Aggregate contribution level the signal stands for.
    pub fn aggregate(&self, k: usize, j: usize) -> f64 {
        math::exp(self.log_level[offset(k) + j])
    }

    /// `|V - lambda psi_c| / (lambda psi_c)` at the root.
    pub fn residual(&self, k: usize, j: usize) -> f64 {
        self.residual[offset(k) + j]
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |a, b| a.max(*b))
    }

    pub fn step_values(&self, k: usize) -> Vec<f64> {
        (0..=k).map(|j| self.l_star(k, j)).collect()
    }

    fn share_divisor(&self) -> f64 {
        match self.mode {
            SolveMode::SocialPlanner => 1.0,
            SolveMode::NashSymmetric => self.n_agents as f64,
        }
    }
}

/// A function of the running maximum at every node of one step: its exact
/// value at the node's own signal and its values at the points of the global
/// grid `log m = i dlog` in a window above the signal. Interpolation is
/// linear in `(log m, log V)`, with power-law extrapolation past the window.
struct StepTable {
    points: usize,
    dlog: f64,
    y: Vec<f64>,
    // level entering the running maximum
    y_hat: Vec<f64>,
    log_root: Vec<f64>,
    first: Vec<f64>,
    log_v: Vec<f64>,
}

impl StepTable {
    fn finish(&mut self, overshoot: bool) {
        let y = &self.y;
        self.y_hat = (0..y.len())
            .map(|j| {
                if !overshoot {
                    return y[j];
                }
                let down = if j > 0 { y[j - 1] - y[j] } else { 0.0 };
                let up = if j + 1 < y.len() { y[j + 1] - y[j] } else { 0.0 };
                y[j] + 0.25 * down.max(up).max(0.0)
            })
            .collect();
    }

    fn new(nodes: usize, points: usize, dlog: f64) -> Self {
        Self {
            points,
            dlog,
            y: Vec::with_capacity(nodes),
            y_hat: Vec::new(),
            log_root: Vec::with_capacity(nodes),
            first: Vec::with_capacity(nodes),
            log_v: Vec::with_capacity(nodes * points),
        }
    }

    fn push(&mut self, y: f64, log_root: f64, log_v: &[f64]) {
        self.y.push(y);
        self.log_root.push(log_root);
        self.first.push(first_index(y, self.dlog));
        self.log_v.extend_from_slice(log_v);
    }

    #[inline]
    fn eval(&self, j: usize, ym: f64) -> f64 {
        let (y0, lr) = (self.y[j], self.log_root[j]);
        if ym <= y0 {
            return math::exp(lr);
        }
        let p = self.points;
        let lv = &self.log_v[j * p..(j + 1) * p];
        let x = ym / self.dlog - self.first[j];
        let out = if x < 0.0 {
            let y1 = self.first[j] * self.dlog;
            lr + (ym - y0) / (y1 - y0) * (lv[0] - lr)
        } else {
            let i = math::floor(x) as usize;
            if i >= p - 1 {
                lv[p - 1] + (x - (p - 1) as f64) * (lv[p - 1] - lv[p - 2])
            } else {
                lv[i] + (x - i as f64) * (lv[i + 1] - lv[i])
            }
        };
        math::exp(out)
    }
}

/// Grid index of the first window point at or above `y`.
fn first_index(y: f64, dlog: f64) -> f64 {
    math::ceil(y / dlog)
}

struct Ctx<'a, U: ?Sized> {
    lat: &'a Lattice,
    u: &'a U,
    lambda: f64,
    mode: SolveMode,
    weights: &'a [f64],
    n: f64,
    opts: SolverOptions,
}

impl<'a, U: UtilityContract + ?Sized> Ctx<'a, U> {
    fn new(lat: &'a Lattice, u: &'a U, lambda: f64, p: &'a ModelParams, mode: SolveMode, opts: SolverOptions) -> Self {
        Self { lat, u, lambda, mode, weights: &p.weights, n: p.n_agents as f64, opts }
    }

    /// Running utility density `H(e, m)`.
    fn density(&self, ex: f64, m: f64) -> f64 {
        match self.mode {
            SolveMode::SocialPlanner => {
                self.weights.iter().map(|g| g * self.u.h(self.lambda * ex / g, m)).sum()
            }
            SolveMode::NashSymmetric => self.u.h(self.lambda * ex, m),
        }
    }

    /// Private spending rate financed by the budget of the mode.
    fn spending(&self, ex: f64, m: f64) -> f64 {
        match self.mode {
            SolveMode::SocialPlanner => self.weights.iter().map(|g| ex * self.u.g(self.lambda * ex / g, m)).sum(),
            SolveMode::NashSymmetric => ex * self.u.g(self.lambda * ex, m),
        }
    }

    fn share(&self) -> f64 {
        match self.mode {
            SolveMode::SocialPlanner => 1.0,
            SolveMode::NashSymmetric => 1.0 / self.n,
        }
    }

    fn window(&self, y: f64) -> impl Iterator<Item = f64> {
        let (first, dlog) = (first_index(y, self.opts.m_step), self.opts.m_step);
        (0..self.opts.m_points).map(move |i| (first + i as f64) * dlog)
    }

    /// `V(k, j, m)` for `ym = log m`.
    fn value(&self, next: Option<&StepTable>, k: usize, j: usize, ex: f64, ym: f64) -> f64 {
        let mut v = self.lat.weight(k) * self.density(ex, math::exp(ym));
        if let Some(nt) = next {
            v += 0.5 * (nt.eval(j, ym.max(nt.y_hat[j])) + nt.eval(j + 1, ym.max(nt.y_hat[j + 1])));
        }
        v
    }

    /// Expected spending from `(k, j)` on, running maximum `ym`.
    fn spent(&self, next: Option<&StepTable>, k: usize, j: usize, ex: f64, ym: f64) -> f64 {
        let mut b = self.lat.weight(k) * self.spending(ex, math::exp(ym));
        if let Some(t) = next {
            for jc in [j, j + 1] {
                let y = ym.max(t.y_hat[jc]);
                let jump = self.share() * self.lat.psi_c(k + 1, jc) * (math::exp(y) - math::exp(ym));
                b += 0.5 * (jump + t.eval(jc, y));
            }
        }
        b
    }

    fn solve_node(&self, next: Option<&StepTable>, k: usize, j: usize) -> Result<NodeOut> {
        let ex = self.lat.ex(k, j);
        let target = self.lambda * self.lat.psi_c(k, j);
        let resid = |y: f64| self.value(next, k, j, ex, y) - target;
        let guess = next.map_or(0.0, |nt| 0.5 * (nt.y[j] + nt.y[j + 1]));
        let bracket_err = |detail: &str| Error::Bracket { step: k, node: j, detail: detail.into() };

        // grow a bracket around the guess; the residual decreases in y
        let f0 = resid(guess);
        if !f0.is_finite() {
            return Err(bracket_err("nonfinite residual"));
        }
        let (mut lo, mut hi) = (guess, guess);
        let mut width = core::f64::consts::LN_2;
        let mut found = f0 == 0.0;
        for _ in 0..self.opts.max_expansions {
            if found {
                break;
            }
            let f = if f0 > 0.0 {
                lo = hi;
                hi += width;
                resid(hi)
            } else {
                hi = lo;
                lo -= width;
                resid(lo)
            };
            if !f.is_finite() {
                return Err(bracket_err("nonfinite residual"));
            }
            found = if f0 > 0.0 { f <= 0.0 } else { f >= 0.0 };
            width *= 2.0;
        }
        if !found {
            return Err(bracket_err("residual keeps its sign over the search range"));
        }

        let mut y = if f0 == 0.0 { guess } else { 0.5 * (lo + hi) };
        let mut r = if f0 == 0.0 { 0.0 } else { resid(y) };
        let mut it = 0;
        while r.abs() > self.opts.tol * target {
            if it == self.opts.max_iter || hi - lo <= 4.0 * f64::EPSILON * y.abs().max(1.0) {
                return Err(Error::Tolerance { step: k, node: j, residual: r.abs() / target });
            }
            if r > 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            y = 0.5 * (lo + hi);
            r = resid(y);
            it += 1;
        }

        let log_v = self.window(y).map(|ym| math::ln(self.value(next, k, j, ex, ym))).collect();
        Ok(NodeOut { y, log_root: math::ln(r + target), residual: r.abs() / target, log_v })
    }
}

struct NodeOut {
    y: f64,
    log_root: f64,
    residual: f64,
    log_v: Vec<f64>,
}

/// Solves the backward equation for the signal at multiplier `lambda`.
pub fn solve_signal<U: UtilityContract + ?Sized>(
    lattice: &Lattice,
    u: &U,
    lambda: f64,
    p: &ModelParams,
    mode: SolveMode,
    opts: &SolverOptions,
) -> Result<SignalSolution> {
    p.check(ValidationMode::General)?;
    opts.check()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("multiplier must be positive, got {lambda}")));
    }
    let ctx = Ctx::new(lattice, u, lambda, p, mode, *opts);
    let n = lattice.n_steps();
    let mut log_level = vec![0.0; offset(n + 1)];
    let mut residual = vec![0.0; offset(n + 1)];
    let mut next: Option<StepTable> = None;
    for k in (0..=n).rev() {
        let outs = par_map(k + 1, |j| ctx.solve_node(next.as_ref(), k, j));
        let mut table = StepTable::new(k + 1, opts.m_points, opts.m_step);
        for (j, o) in outs.into_iter().enumerate() {
            let o = o?;
            log_level[offset(k) + j] = o.y;
            residual[offset(k) + j] = o.residual;
            table.push(o.y, o.log_root, &o.log_v);
        }
        table.finish(opts.overshoot);
        next = Some(table);
    }
    Ok(SignalSolution { mode, lambda, n_agents: p.n_agents, n_steps: n, log_level, residual, options: *opts })
}

/// Expected discounted spending of the plan the signal induces: all agents'
/// consumption plus the aggregate contribution for the planner, one agent's
/// consumption and contribution share for the game.
pub fn lattice_budget<U: UtilityContract + ?Sized>(
    lattice: &Lattice,
    u: &U,
    p: &ModelParams,
    sol: &SignalSolution,
) -> Result<f64> {
    if sol.n_steps != lattice.n_steps() {
        return Err(Error::GridMismatch(format!(
            "signal has {} steps, lattice {}",
            sol.n_steps,
            lattice.n_steps()
        )));
    }
    let opts = sol.options;
    let ctx = Ctx::new(lattice, u, sol.lambda, p, sol.mode, opts);
    let n = lattice.n_steps();
    let mut next: Option<StepTable> = None;
    for k in (0..=n).rev() {
        let ys = &sol.log_level[offset(k)..offset(k + 1)];
        let nt = next.as_ref();
        let rows = par_map(k + 1, |j| {
            let ex = lattice.ex(k, j);
            let root = math::ln(ctx.spent(nt, k, j, ex, ys[j]));
            (root, ctx.window(ys[j]).map(|ym| math::ln(ctx.spent(nt, k, j, ex, ym))).collect::<Vec<f64>>())
        });
        let mut table = StepTable::new(k + 1, opts.m_points, opts.m_step);
        for (j, (root, r)) in rows.into_iter().enumerate() {
            table.push(ys[j], root, &r);
        }
        table.finish(opts.overshoot);
        next = Some(table);
    }
    let root = next.expect("lattice has a root");
    Ok(ctx.share() * lattice.psi_c(0, 0) * sol.aggregate(0, 0) + root.eval(0, root.y[0]))
}

/// Finds the multiplier whose signal spends `target`, to relative
/// tolerance `tol`. Secant steps in `(log lambda, log budget)`, started
/// from the budget exponent when the utility knows it, with bisection as
/// the fallback.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_lambda<U: UtilityContract + ?Sized>(
    lattice: &Lattice,
    u: &U,
    p: &ModelParams,
    mode: SolveMode,
    target: f64,
    opts: &SolverOptions,
    tol: f64,
) -> Result<(f64, SignalSolution)> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::Domain(format!("budget target must be positive, got {target}")));
    }
    let spend = |lambda: f64| -> Result<(f64, SignalSolution)> {
        let sol = solve_signal(lattice, u, lambda, p, mode, opts)?;
        Ok((lattice_budget(lattice, u, p, &sol)?, sol))
    };
    // secant steps on log budget against log lambda; spending decreases in
    // lambda, so points spending too much bound lambda from below
    let gap = |b: f64| math::ln(b / target);
    let done = |b: f64| (b / target - 1.0).abs() <= tol;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let note = |x: f64, y: f64, lo: &mut f64, hi: &mut f64| {
        if y > 0.0 {
            *lo = lo.max(x);
        } else {
            *hi = hi.min(x);
        }
    };
    let (x0, (b0, s0)) = (0.0, spend(1.0)?);
    if done(b0) {
        return Ok((1.0, s0));
    }
    let y0 = gap(b0);
    note(x0, y0, &mut lo, &mut hi);
    let x1 = match u.budget_lambda_exponent() {
        Some(e) => x0 - y0 / e,
        None => x0 + if y0 > 0.0 { 0.1 } else { -0.1 },
    };
    let (mut xa, mut ya) = (x0, y0);
    let (mut xb, (mut bb, mut sb)) = (x1, spend(math::exp(x1))?);
    let mut last = (bb / target - 1.0).abs();
    for _ in 0..12 {
        if done(bb) {
            return Ok((math::exp(xb), sb));
        }
        let yb = gap(bb);
        note(xb, yb, &mut lo, &mut hi);
        let mut x = xb - yb * (xb - xa) / (yb - ya);
        if !x.is_finite() || x <= lo || x >= hi {
            x = if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if yb > 0.0 {
                xb + 2.0 * (xb - xa).abs().max(0.1)
            } else {
                xb - 2.0 * (xb - xa).abs().max(0.1)
            };
        }
        (xa, ya) = (xb, yb);
        xb = x;
        (bb, sb) = spend(math::exp(xb))?;
        last = (bb / target - 1.0).abs();
    }
    if done(bb) {
        return Ok((math::exp(xb), sb));
    }
    note(xb, gap(bb), &mut lo, &mut hi);

    // fall back to bisection
    let bracket_err = || Error::Bracket { step: 0, node: 0, detail: "budget not bracketed in lambda".into() };
    let mut width = 0.1;
    for _ in 0..60 {
        if lo.is_finite() && hi.is_finite() {
            break;
        }
        if lo.is_finite() {
            let x = lo + width;
            let (b, _) = spend(math::exp(x))?;
            note(x, gap(b), &mut lo, &mut hi);
        } else {
            let x = hi - width;
            let (b, _) = spend(math::exp(x))?;
            note(x, gap(b), &mut lo, &mut hi);
        }
        width *= 2.0;
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(bracket_err());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (bm, sm) = spend(math::exp(mid))?;
        last = (bm / target - 1.0).abs();
        if last <= tol {
            return Ok((math::exp(mid), sm));
        }
        if bm > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    Err(Error::Tolerance { step: 0, node: 0, residual: last })
}

/// `l*(k, w)`, log-linear in `w` through the nodes of step `k`.
fn signal_at(sol: &SignalSolution, lattice: &Lattice, k: usize, w: f64) -> f64 {
    if k == 0 {
        return sol.aggregate(0, 0);
    }
    let x = 0.5 * (w / lattice.step + k as f64);
    let j0 = (math::floor(x).max(0.0) as usize).min(k - 1);
    let f = x - j0 as f64;
    let (a, b) = (sol.log_level[offset(k) + j0], sol.log_level[offset(k) + j0 + 1]);
    math::exp(a + f * (b - a))
}

/// Policy read off a signal along a simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPolicy {
    pub policy: PolicySet,
    /// Largest distance from the path's `W` to the nearest lattice node.
    pub max_projection_error: f64,
}

/// `C(t) = max(0, sup_{u <= t} l*(u, W(u)))` along `sample`, with
/// consumption from the binding first-order condition. The sample must use
/// the lattice's drift convention and a grid refining the lattice grid by
/// a whole factor.
///
/// `l*` is read at the lattice step at or after each sample time,
/// log-linearly in `W` between the two surrounding nodes (extrapolated past
/// the outermost ones). For samples generated with bridge extrema the
/// supremum also covers a bridge minimum of `W` drawn within every step,
/// which is where a signal decreasing in `W` peaks.
pub fn policy_from_signal<U: UtilityContract + ?Sized>(
    sol: &SignalSolution,
    lattice: &Lattice,
    sample: &SamplePath,
    u: &U,
    p: &ModelParams,
) -> Result<SignalPolicy> {
    let (sg, lg) = (sample.grid(), lattice.grid());
    let factor = sg.n_steps() / lg.n_steps();
    if (sg.t_max() - lg.t_max()).abs() > 1e-12 * lg.t_max() || factor == 0 || factor * lg.n_steps() != sg.n_steps() {
        return Err(Error::GridMismatch(format!(
            "sample grid ({}, {} steps) does not refine lattice grid ({}, {} steps)",
            sg.t_max(),
            sg.n_steps(),
            lg.t_max(),
            lg.n_steps()
        )));
    }
    if sol.n_steps != lattice.n_steps() {
        return Err(Error::GridMismatch("signal and lattice differ".into()));
    }
    let mu = lattice.x.log_drift();
    let sigma = lattice.x.sigma;
    let minima = (sigma > 0.0 && sample.extrema() == ExtremaMode::Bridge).then(|| sample.step_minima_log_ex(sigma));
    let mut max_err = 0.0f64;
    let mut c = Vec::with_capacity(sample.len());
    let mut level = 0.0f64;
    for ks in 0..sample.len() {
        // lattice step at or after the sample time
        let k = ks.div_ceil(factor);
        let t = sg.t(ks);
        if sigma > 0.0 {
            let w = (sample.log_ex()[ks] + mu * t) / sigma;
            max_err = max_err.max(lattice.nearest_node(k, w).1.abs());
            level = level.max(signal_at(sol, lattice, k, w));
            if let (Some(m), true) = (&minima, ks > 0) {
                level = level.max(signal_at(sol, lattice, k, (m[ks - 1] + mu * t) / sigma));
            }
        } else {
            level = level.max(sol.aggregate(k, k / 2));
        }
        c.push(level);
    }
    let contribution = MonotonePath::new(c)?;
    let n = p.n_agents;
    let ex = sample.ex_values();
    let lambda = sol.lambda;
    let consumption: Vec<Vec<f64>> = match sol.mode {
        SolveMode::SocialPlanner => p
            .weights
            .iter()
            .map(|g| ex.iter().zip(contribution.values()).map(|(e, cc)| u.g(lambda * e / g, *cc)).collect())
            .collect(),
        SolveMode::NashSymmetric => {
            let x: Vec<f64> = ex.iter().zip(contribution.values()).map(|(e, cc)| u.g(lambda * e, *cc)).collect();
            vec![x; n]
        }
    };
    let share = contribution.scaled(1.0 / n as f64);
    let aggregate_x = (0..sample.len()).map(|k| consumption.iter().map(|x| x[k]).sum()).collect();
    let agents = consumption
        .into_iter()
        .enumerate()
        .map(|(i, x)| PolicyPair {
            consumption: x,
            contribution: share.clone(),
            owner: match sol.mode {
                SolveMode::SocialPlanner => Owner::SocialPlannerAgent(i),
                SolveMode::NashSymmetric => Owner::NashAgent(i),
            },
        })
        .collect();
    Ok(SignalPolicy {
        policy: PolicySet {
            agents,
            aggregate: PolicyPair { consumption: aggregate_x, contribution, owner: Owner::Aggregate },
        },
        max_projection_error: max_err,
    })
}
