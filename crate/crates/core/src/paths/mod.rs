//! Seeded simulation of the exponential price factors.
//!
//! Each factor is `E(t) = exp(sigma W(t) - mu t)` with `mu = sigma^2 / 2`
//! (martingale convention) or `mu = 0` (raw exponential). Paths carry their
//! driver logs on a uniform grid plus the running infimum of one linear
//! channel `Z = cx log E_x + cc log E_c`, monitored either at grid points or
//! exactly through the Brownian bridge between them.
//!
//! Every random draw is keyed by `(master_seed, path index, stream)` so a
//! path can be regenerated alone, and a prefix can be continued with fresh
//! suffixes (see [`Segment`]).

mod functional;
mod mc;

pub use functional::{
    discount_weights, discounted_integral, running_inf, running_sup, sample_exponential_time, stieltjes_integral,
    sup_before_exponential_time, two_time_inf, Quadrature,
};
pub(crate) use mc::par_map;
pub use mc::{ks_critical_1pct, ks_one_sample, ks_two_sample, pairwise_sum, Ensemble, McEstimate, MeanVector};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::SeedableRng;
use rand_distr::{Distribution, Open01, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::math;

/// Uniform grid `t_k = k dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_max: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::Config(format!("t_max must be positive, got {t_max}")));
        }
        if n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        Ok(Self { t_max, n_steps })
    }

    /// Grid with step `dt` (rounded to the nearest whole number of steps).
    pub fn with_dt(t_max: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        Self::new(t_max, math::round(t_max / dt).max(1.0) as usize)
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid points, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Index of grid time `t`, if `t` lies on the grid up to rounding.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let k = math::round(x);
        if k >= 0.0 && k <= self.n_steps as f64 && (x - k).abs() <= 1e-9 * x.abs().max(1.0) {
            Some(k as usize)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftConvention {
    /// `E(t) = exp(sigma W(t) - sigma^2 t / 2)`.
    Martingale,
    /// `E(t) = exp(sigma W(t))`.
    RawExponential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorSpec {
    pub sigma: f64,
    pub convention: DriftConvention,
}

impl FactorSpec {
    pub fn new(sigma: f64, convention: DriftConvention) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Config(format!("volatility must be nonnegative, got {sigma}")));
        }
        Ok(Self { sigma, convention })
    }

    /// Drift `mu` of `log E(t) = sigma W(t) - mu t`.
    pub fn log_drift(&self) -> f64 {
        match self.convention {
            DriftConvention::Martingale => 0.5 * self.sigma * self.sigma,
            DriftConvention::RawExponential => 0.0,
        }
    }
}

/// How the two factors' Brownian drivers relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Independent,
    /// Correlation one: both factors use the `x` driver.
    Shared,
}

/// How running extrema of the monitored channel are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremaMode {
    /// Minimum over grid points only (biased high by `O(sqrt(dt))`).
    Grid,
    /// Exact continuous-time infimum, sampled from the Brownian bridge
    /// between consecutive grid points.
    Bridge,
}

/// `Z = cx log E_x + cc log E_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub cx: f64,
    pub cc: f64,
}

impl Channel {
    pub fn new(cx: f64, cc: f64) -> Self {
        Self { cx, cc }
    }

    #[inline]
    pub fn eval(&self, log_ex: f64, log_ec: f64) -> f64 {
        self.cx * log_ex + self.cc * log_ec
    }

    fn same_as(&self, other: &Channel) -> bool {
        (self.cx - other.cx).abs() <= 1e-14 * self.cx.abs().max(1.0)
            && (self.cc - other.cc).abs() <= 1e-14 * self.cc.abs().max(1.0)
    }
}

/// Everything needed to generate a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec {
    pub grid: TimeGrid,
    pub x: FactorSpec,
    pub c: FactorSpec,
    pub coupling: Coupling,
    pub channel: Channel,
    pub extrema: ExtremaMode,
}

impl PathSpec {
    pub fn new(grid: TimeGrid, x: FactorSpec, c: FactorSpec) -> Self {
        Self { grid, x, c, coupling: Coupling::Independent, channel: Channel::new(1.0, 0.0), extrema: ExtremaMode::Grid }
    }

    pub fn with_coupling(mut self, coupling: Coupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_channel(mut self, channel: Channel) -> Self {
        self.channel = channel;
        self
    }

    pub fn with_extrema(mut self, extrema: ExtremaMode) -> Self {
        self.extrema = extrema;
        self
    }

    pub fn with_grid(mut self, grid: TimeGrid) -> Self {
        self.grid = grid;
        self
    }

    /// Variance rate of the monitored channel.
    pub fn channel_variance_rate(&self) -> f64 {
        let (a, b) = (self.channel.cx * self.x.sigma, self.channel.cc * self.c.sigma);
        match self.coupling {
            Coupling::Independent => a * a + b * b,
            Coupling::Shared => (a + b) * (a + b),
        }
    }
}

/// Identifies where a path's randomness comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lineage {
    pub master_seed: u64,
    pub index: u64,
}

impl Lineage {
    pub fn key(&self) -> u64 {
        mix(mix(self.master_seed ^ 0x5047_4353_494d_0001) ^ self.index)
    }
}

/// Increments after step `from_step` (up to the next segment) are drawn
/// from generators keyed by `key`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub from_step: usize,
    pub key: u64,
}

impl Segment {
    /// Key of the `j`-th fresh continuation of the path `key` after `step`.
    pub fn restart_key(key: u64, step: usize, j: u64) -> u64 {
        mix(mix(key ^ 0x7265_7374_6172_7400) ^ ((step as u64) << 24) ^ j)
    }
}

const STREAM_X: u64 = 1;
const STREAM_C: u64 = 2;
const STREAM_BRIDGE: u64 = 3;
const STREAM_STEP_MIN: u64 = 4;

/// splitmix64 finalizer.
#[inline]
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn rng_for(key: u64, stream: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(mix(key ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93)))
}

/// State of a path at grid step `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub k: usize,
    pub log_ex: f64,
    pub log_ec: f64,
    /// `log E_x(t_k) - log E_x(t_{k-1})` (0 at `k = 0`).
    pub dlog_ex: f64,
    /// Channel value at `t_k`.
    pub z: f64,
    /// Infimum of the channel over `[0, t_k]`.
    pub z_inf: f64,
}

struct Rngs {
    x: Xoshiro256PlusPlus,
    c: Xoshiro256PlusPlus,
    bridge: Xoshiro256PlusPlus,
}

impl Rngs {
    fn new(key: u64) -> Self {
        Self { x: rng_for(key, STREAM_X), c: rng_for(key, STREAM_C), bridge: rng_for(key, STREAM_BRIDGE) }
    }
}

/// Draw the running minimum after the interval from `z0` to `z1`, given the
/// minimum `m` up to `z0`. `v` is the channel variance over the interval.
#[inline]
pub(crate) fn bridge_min<R: rand_core::RngCore>(z0: f64, z1: f64, m: f64, v: f64, inv_v: f64, rng: &mut R) -> f64 {
    let b = z1 - m;
    if b <= 0.0 {
        let u: f64 = Open01.sample(rng);
        let d = z1 - z0;
        return 0.5 * ((z0 + z1) - math::sqrt(d * d - 2.0 * v * math::ln(u)));
    }
    let x = 2.0 * (z0 - m) * b * inv_v;
    if x > 40.0 {
        return m;
    }
    let u: f64 = Open01.sample(rng);
    let lu = math::ln(u);
    if lu < -x {
        let d = z1 - z0;
        0.5 * ((z0 + z1) - math::sqrt(d * d - 2.0 * v * lu))
    } else {
        m
    }
}

/// Generates the path described by `segments` step by step, hands each
/// grid point (including `k = 0`) to `f` and returns the last one.
/// `segments` must start at step 0 and be sorted by `from_step`.
#[inline(always)]
pub fn walk<F: FnMut(&PathPoint)>(spec: &PathSpec, segments: &[Segment], f: F) -> PathPoint {
    debug_assert!(!segments.is_empty() && segments[0].from_step == 0);
    if spec.c.sigma == 0.0 && spec.coupling == Coupling::Independent {
        walk_impl::<false, F>(spec, segments, f)
    } else {
        walk_impl::<true, F>(spec, segments, f)
    }
}

#[inline(always)]
fn walk_impl<const TWO: bool, F: FnMut(&PathPoint)>(spec: &PathSpec, segments: &[Segment], mut f: F) -> PathPoint {
    let grid = spec.grid;
    let n = grid.n_steps();
    let dt = grid.dt();
    let sdt = math::sqrt(dt);
    let (sx, sc) = (spec.x.sigma * sdt, spec.c.sigma * sdt);
    let (mx, mc) = (spec.x.log_drift() * dt, spec.c.log_drift() * dt);
    let shared = spec.coupling == Coupling::Shared;
    let draw_x = sx > 0.0 || (shared && sc > 0.0);
    let v = spec.channel_variance_rate() * dt;
    let inv_v = 1.0 / v;
    let bridge = spec.extrema == ExtremaMode::Bridge && v > 0.0;
    let ch = spec.channel;

    let mut p = PathPoint { k: 0, log_ex: 0.0, log_ec: 0.0, dlog_ex: 0.0, z: 0.0, z_inf: 0.0 };
    f(&p);
    for (si, seg) in segments.iter().enumerate() {
        let end = segments.get(si + 1).map_or(n, |s| s.from_step.min(n));
        let mut rngs = Rngs::new(seg.key);
        for k in (seg.from_step + 1)..(end + 1) {
            let zx: f64 = if draw_x { StandardNormal.sample(&mut rngs.x) } else { 0.0 };
            p.dlog_ex = sx * zx - mx;
            p.log_ex += p.dlog_ex;
            if TWO {
                let zc: f64 = if shared {
                    zx
                } else if sc > 0.0 {
                    StandardNormal.sample(&mut rngs.c)
                } else {
                    0.0
                };
                p.log_ec += sc * zc - mc;
            }
            let z0 = p.z;
            p.z = if TWO { ch.eval(p.log_ex, p.log_ec) } else { ch.cx * p.log_ex };
            p.z_inf = if bridge { bridge_min(z0, p.z, p.z_inf, v, inv_v, &mut rngs.bridge) } else { p.z_inf.min(p.z) };
            p.k = k;
            f(&p);
        }
    }
    p
}

/// A generated factor trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    lineage: Lineage,
    channel: Channel,
    extrema: ExtremaMode,
    log_ex: Vec<f64>,
    log_ec: Vec<f64>,
    z_inf: Vec<f64>,
}

impl SamplePath {
    /// Generates the path `lineage` under `spec`.
    pub fn generate(spec: &PathSpec, lineage: Lineage) -> Self {
        Self::generate_segments(spec, lineage, &[Segment { from_step: 0, key: lineage.key() }])
    }

    pub fn generate_segments(spec: &PathSpec, lineage: Lineage, segments: &[Segment]) -> Self {
        let n = spec.grid.len();
        let mut log_ex = Vec::with_capacity(n);
        let mut log_ec = Vec::with_capacity(n);
        let mut z_inf = Vec::with_capacity(n);
        walk(spec, segments, |p| {
            log_ex.push(p.log_ex);
            log_ec.push(p.log_ec);
            z_inf.push(p.z_inf);
        });
        Self { grid: spec.grid, lineage, channel: spec.channel, extrema: spec.extrema, log_ex, log_ec, z_inf }
    }

    /// Path from given factor values. Both must be positive, start at 1 and
    /// have one value per grid point. Extrema are monitored on the grid.
    pub fn from_factors(grid: TimeGrid, ex: &[f64], ec: &[f64], channel: Channel) -> Result<Self> {
        for (name, v) in [("E_x", ex), ("E_c", ec)] {
            if v.len() != grid.len() {
                return Err(Error::GridMismatch(format!("{name} has {} values for {} grid points", v.len(), grid.len())));
            }
            if let Some(bad) = v.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
                return Err(Error::Domain(format!("{name} values must be positive, got {bad}")));
            }
            if (v[0] - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("{name} must start at 1, got {}", v[0])));
            }
        }
        let log_ex: Vec<f64> = ex.iter().map(|e| math::ln(*e)).collect();
        let log_ec: Vec<f64> = ec.iter().map(|e| math::ln(*e)).collect();
        let z: Vec<f64> = log_ex.iter().zip(&log_ec).map(|(a, b)| channel.eval(*a, *b)).collect();
        Ok(Self {
            grid,
            lineage: Lineage { master_seed: 0, index: 0 },
            channel,
            extrema: ExtremaMode::Grid,
            log_ex,
            log_ec,
            z_inf: running_inf(&z),
        })
    }

    /// Path with `E_c = 1`.
    pub fn from_x_factor(grid: TimeGrid, ex: &[f64], channel: Channel) -> Result<Self> {
        Self::from_factors(grid, ex, &vec![1.0; ex.len()], channel)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn lineage(&self) -> Lineage {
        self.lineage
    }

    pub fn extrema(&self) -> ExtremaMode {
        self.extrema
    }

    pub fn len(&self) -> usize {
        self.log_ex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_ex.is_empty()
    }

    pub fn log_ex(&self) -> &[f64] {
        &self.log_ex
    }

    pub fn log_ec(&self) -> &[f64] {
        &self.log_ec
    }

    pub fn ex(&self, k: usize) -> f64 {
        math::exp(self.log_ex[k])
    }

    pub fn ec(&self, k: usize) -> f64 {
        math::exp(self.log_ec[k])
    }

    pub fn ex_values(&self) -> Vec<f64> {
        self.log_ex.iter().map(|l| math::exp(*l)).collect()
    }

    pub fn ec_values(&self) -> Vec<f64> {
        self.log_ec.iter().map(|l| math::exp(*l)).collect()
    }

    /// Minimum of `log E_x` over each step `[t_k, t_k+1]`, drawn from the
    /// Brownian bridge between the grid values; `sigma` is the volatility of
    /// the `x` factor. The draws depend on the lineage alone (one uniform
    /// per step, in step order), so paths sharing a prefix share its minima.
    pub fn step_minima_log_ex(&self, sigma: f64) -> Vec<f64> {
        let v = sigma * sigma * self.grid.dt();
        let mut rng = rng_for(self.lineage.key(), STREAM_STEP_MIN);
        self.log_ex
            .windows(2)
            .map(|w| if v > 0.0 { bridge_min(w[0], w[1], f64::INFINITY, v, 1.0 / v, &mut rng) } else { w[0].min(w[1]) })
            .collect()
    }

    /// Running infimum of `channel` along the path. Uses the extrema drawn
    /// at generation time when `channel` is the monitored one; otherwise
    /// (and always for grid mode) the grid minimum.
    pub fn channel_inf(&self, channel: Channel) -> Vec<f64> {
        if channel.same_as(&self.channel) {
            return self.z_inf.clone();
        }
        let mut m = f64::INFINITY;
        self.log_ex
            .iter()
            .zip(&self.log_ec)
            .map(|(a, b)| {
                m = m.min(channel.eval(*a, *b));
                m
            })
            .collect()
    }
}

/// Nondecreasing path on a grid; `values[0]` is the mass of the jump at
/// time 0 (the path is 0 just before time 0).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonePath {
    values: Vec<f64>,
}

impl MonotonePath {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("monotone path needs at least one value".into()));
        }
        if values[0] < 0.0 || !values[0].is_finite() {
            return Err(Error::Monotonicity { step: 0, drop: -values[0] });
        }
        for k in 1..values.len() {
            let drop = values[k - 1] - values[k];
            if drop > 1e-12 * values[k - 1].abs().max(1.0) || !values[k].is_finite() {
                return Err(Error::Monotonicity { step: k, drop });
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn atom_at_zero(&self) -> f64 {
        self.values[0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `c` times the path; `c` must be nonnegative.
    pub fn scaled(&self, c: f64) -> Self {
        debug_assert!(c >= 0.0);
        Self { values: self.values.iter().map(|v| c * v).collect() }
    }
}

#[cfg(test)]
mod tests;
