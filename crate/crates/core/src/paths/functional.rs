//! Path functionals: running extrema, the two-time infimum, discounted
//! Lebesgue and Stieltjes integrals, and exponential-time draws.

use alloc::vec::Vec;

use rand_core::SeedableRng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{mix, MonotonePath, SamplePath, TimeGrid};
use crate::error::{Error, Result};
use crate::math;

pub fn running_sup(f: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    f.iter()
        .map(|v| {
            m = m.max(*v);
            m
        })
        .collect()
}

pub fn running_inf(f: &[f64]) -> Vec<f64> {
    let mut m = f64::INFINITY;
    f.iter()
        .map(|v| {
            m = m.min(*v);
            m
        })
        .collect()
}

/// `min_{s = 0..=u} E_c(s) E_x(u - s)^(-q)` over grid points, with `E_x`
/// read from `path_x` at the shifted index.
pub fn two_time_inf(path_c: &SamplePath, path_x: &SamplePath, q: f64, u_step: usize) -> Result<f64> {
    let len = path_c.len().min(path_x.len());
    if u_step >= len {
        return Err(Error::Index { index: u_step, len });
    }
    let (lc, lx) = (path_c.log_ec(), path_x.log_ex());
    let m = (0..=u_step).map(|s| lc[s] - q * lx[u_step - s]).fold(f64::INFINITY, f64::min);
    Ok(math::exp(m))
}

/// Quadrature rule for `int e^(-rt) f(t) dt` with `f` frozen on each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    /// Weight `e^(-r t_k) dt`.
    LeftRiemann,
    /// Weight `int_{t_k}^{t_k+1} e^(-rt) dt = e^(-r t_k) (1 - e^(-r dt)) / r`,
    /// exact for piecewise-constant integrands.
    Exponential,
}

/// Weights `w_k`, `k = 0..n_steps`, of the discounted integral.
pub fn discount_weights(r: f64, grid: &TimeGrid, rule: Quadrature) -> Vec<f64> {
    let dt = grid.dt();
    let base = match rule {
        Quadrature::LeftRiemann => dt,
        Quadrature::Exponential => {
            if r == 0.0 {
                dt
            } else {
                -math::exp_m1(-r * dt) / r
            }
        }
    };
    (0..grid.n_steps()).map(|k| base * math::exp(-r * grid.t(k))).collect()
}

/// Left-endpoint sum `sum_{k < n_steps} e^(-r t_k) f(t_k) dt`.
pub fn discounted_integral(f: &[f64], r: f64, grid: &TimeGrid) -> f64 {
    let dt = grid.dt();
    f.iter().take(grid.n_steps()).enumerate().map(|(k, v)| math::exp(-r * grid.t(k)) * v * dt).sum()
}

/// `g(0) * atom + sum_k g(t_k) (C_k - C_{k-1})`.
pub fn stieltjes_integral(g: &[f64], path: &MonotonePath) -> Result<f64> {
    let v = path.values();
    if g.len() < v.len() {
        return Err(Error::GridMismatch(alloc::format!(
            "integrand has {} values for a path of {}",
            g.len(),
            v.len()
        )));
    }
    let mut acc = g[0] * v[0];
    for k in 1..v.len() {
        let inc = v[k] - v[k - 1];
        if inc < -1e-12 * v[k - 1].abs().max(1.0) {
            return Err(Error::Monotonicity { step: k, drop: -inc });
        }
        acc += g[k] * inc;
    }
    Ok(acc)
}

/// Exponential time with mean `1 / rate`, determined by `seed`.
pub fn sample_exponential_time(rate: f64, seed: u64) -> f64 {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(mix(seed));
    let e: f64 = Exp1.sample(&mut rng);
    e / rate
}

/// Draws `tau ~ Exp(rate)` and the exact `sup_{s <= tau} (-W(s))` for a
/// standard Brownian motion independent of `tau`; returns `(tau, sup)`.
pub fn sup_before_exponential_time(rate: f64, seed: u64) -> (f64, f64) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(mix(seed));
    let e: f64 = Exp1.sample(&mut rng);
    let tau = e / rate;
    let z: f64 = StandardNormal.sample(&mut rng);
    let u: f64 = Open01.sample(&mut rng);
    // maximum of a Brownian bridge from 0 to b over [0, tau]
    let b = -math::sqrt(tau) * z;
    let sup = 0.5 * (b + math::sqrt(b * b - 2.0 * tau * math::ln(u)));
    (tau, sup)
}
