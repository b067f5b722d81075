//! Economy primitives: parameters, Cobb-Douglas utility and its marginals.
//!
//! With `u(x, c) = x^a c^b / (a + b)` the inverse of `u_x(., c)` and the
//! reduced marginal `h(psi, c) = u_c(g(psi, c), c)` are available in closed
//! form:
//!
//! ```text
//! g(psi, c) = (psi (a + b) / (a c^b))^(1 / (a - 1))
//! h(psi, c) = delta psi^(a / (a - 1)) c^((a + b - 1) / (1 - a))
//! delta     = (b / a) ((a + b) / a)^(1 / (a - 1))
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::math;

/// Planning horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

/// Which invariants [`ModelParams::validate`] enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    General,
    /// Additionally requires the single-factor Black-Scholes configuration
    /// (`sigma_c = 0`) and `sqrt(2r) > sigma_x alpha / (1 - alpha - beta)`.
    BlackScholes,
}

/// Constants of the economy.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub n_agents: usize,
    /// Initial wealth of every agent.
    pub wealth: f64,
    pub alpha: f64,
    pub beta: f64,
    pub discount_rate: f64,
    /// Volatility of the private-good price factor.
    pub sigma_x: f64,
    /// Volatility of the public-good price factor.
    pub sigma_c: f64,
    /// Welfare weights of the planner, one per agent.
    pub weights: Vec<f64>,
    pub horizon: Horizon,
}

impl ModelParams {
    /// Symmetric economy: equal weights `1/n`, infinite horizon.
    pub fn symmetric(
        n_agents: usize,
        wealth: f64,
        alpha: f64,
        beta: f64,
        discount_rate: f64,
        sigma_x: f64,
        sigma_c: f64,
    ) -> Self {
        let weights = if n_agents == 0 { Vec::new() } else { vec![1.0 / n_agents as f64; n_agents] };
        Self { n_agents, wealth, alpha, beta, discount_rate, sigma_x, sigma_c, weights, horizon: Horizon::Infinite }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }

    /// Checks every invariant and hands the parameters back unchanged.
    pub fn validate(self, mode: ValidationMode) -> Result<Self> {
        self.check(mode)?;
        Ok(self)
    }

    pub fn check(&self, mode: ValidationMode) -> Result<()> {
        if self.n_agents == 0 {
            return Err(domain("n_agents must be at least 1"));
        }
        if !(self.wealth.is_finite() && self.wealth > 0.0) {
            return Err(domain(format!("wealth must be positive, got {}", self.wealth)));
        }
        check_exponents(self.alpha, self.beta)?;
        if !(self.discount_rate.is_finite() && self.discount_rate > 0.0) {
            return Err(domain(format!("discount rate must be positive, got {}", self.discount_rate)));
        }
        for (name, s) in [("sigma_x", self.sigma_x), ("sigma_c", self.sigma_c)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(domain(format!("{name} must be nonnegative, got {s}")));
            }
        }
        if self.weights.len() != self.n_agents {
            return Err(domain(format!(
                "expected {} welfare weights, got {}",
                self.n_agents,
                self.weights.len()
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(domain(format!("welfare weights must be positive, got {w}")));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 * self.n_agents as f64 {
            return Err(domain(format!("welfare weights must sum to 1, got {total}")));
        }
        if let Horizon::Finite(t) = self.horizon {
            if !(t.is_finite() && t > 0.0) {
                return Err(domain(format!("horizon must be positive, got {t}")));
            }
        }
        if mode == ValidationMode::BlackScholes {
            if self.sigma_c != 0.0 {
                return Err(domain("the Black-Scholes configuration takes the public good as numeraire (sigma_c = 0)"));
            }
            let (lhs, rhs) = self.finiteness_sides();
            if lhs <= rhs {
                return Err(Error::Finiteness { lhs, rhs });
            }
        }
        Ok(())
    }

    /// `(sqrt(2r), sigma_x alpha / (1 - alpha - beta))`.
    pub fn finiteness_sides(&self) -> (f64, f64) {
        (math::sqrt(2.0 * self.discount_rate), self.sigma_x * self.alpha / (1.0 - self.alpha - self.beta))
    }

    /// True when every weight equals `1/n`.
    pub fn has_equal_weights(&self) -> bool {
        let w = 1.0 / self.n_agents as f64;
        self.weights.iter().all(|g| (g - w).abs() <= 1e-14)
    }

    pub fn utility(&self) -> CobbDouglasUtility {
        CobbDouglasUtility::new(self.alpha, self.beta).expect("exponents checked by validate")
    }
}

fn check_exponents(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(domain(format!("beta must lie in (0,1), got {beta}")));
    }
    if alpha + beta >= 1.0 {
        return Err(domain(format!("alpha + beta must be below 1, got {}", alpha + beta)));
    }
    Ok(())
}

/// Marginal structure the lattice solver and the verifier work with.
///
/// Implementations must make `h(psi, .)` and `h(., c)` strictly decreasing
/// with `h -> inf` as `c -> 0` and `h -> 0` as `c -> inf`. The unchecked
/// methods may return `inf` or `nan` on the boundary of the domain.
pub trait UtilityContract: Sync {
    fn u_x(&self, x: f64, c: f64) -> f64;
    fn u_c(&self, x: f64, c: f64) -> f64;
    /// Inverse of `u_x(., c)`.
    fn g(&self, psi: f64, c: f64) -> f64;
    fn h(&self, psi: f64, c: f64) -> f64;

    /// If budget spending of the optimal plan scales as `lambda^e`, returns
    /// `e`; lets multiplier calibration start from a one-shot rescaling.
    fn budget_lambda_exponent(&self) -> Option<f64> {
        None
    }
}

/// `u(x, c) = x^alpha c^beta / (alpha + beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CobbDouglasUtility {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

impl CobbDouglasUtility {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_exponents(alpha, beta)?;
        let delta = beta / alpha * math::powf((alpha + beta) / alpha, 1.0 / (alpha - 1.0));
        Ok(Self { alpha, beta, delta })
    }

    pub fn utility(&self, x: f64, c: f64) -> Result<f64> {
        positive(x, c)?;
        Ok(math::powf(x, self.alpha) * math::powf(c, self.beta) / (self.alpha + self.beta))
    }

    pub fn marginal_x(&self, x: f64, c: f64) -> Result<f64> {
        positive(x, c)?;
        Ok(self.u_x(x, c))
    }

    pub fn marginal_c(&self, x: f64, c: f64) -> Result<f64> {
        positive(x, c)?;
        Ok(self.u_c(x, c))
    }

    pub fn inverse_marginal_g(&self, psi: f64, c: f64) -> Result<f64> {
        positive(psi, c)?;
        Ok(self.g(psi, c))
    }

    /// Closed form `delta psi^(a/(a-1)) c^((a+b-1)/(1-a))`.
    pub fn reduced_marginal_h(&self, psi: f64, c: f64) -> Result<f64> {
        positive(psi, c)?;
        Ok(self.h(psi, c))
    }

    /// `u_c(g(psi, c), c)` evaluated by composition.
    pub fn reduced_marginal_h_composed(&self, psi: f64, c: f64) -> Result<f64> {
        let x = self.inverse_marginal_g(psi, c)?;
        self.marginal_c(x, c)
    }

    /// Exponent of `psi` in `h`.
    pub fn h_psi_exponent(&self) -> f64 {
        self.alpha / (self.alpha - 1.0)
    }

    /// Exponent of `c` in `h`; negative.
    pub fn h_c_exponent(&self) -> f64 {
        (self.alpha + self.beta - 1.0) / (1.0 - self.alpha)
    }
}

impl UtilityContract for CobbDouglasUtility {
    #[inline]
    fn u_x(&self, x: f64, c: f64) -> f64 {
        self.alpha * math::powf(x, self.alpha - 1.0) * math::powf(c, self.beta) / (self.alpha + self.beta)
    }

    #[inline]
    fn u_c(&self, x: f64, c: f64) -> f64 {
        self.beta * math::powf(x, self.alpha) * math::powf(c, self.beta - 1.0) / (self.alpha + self.beta)
    }

    #[inline]
    fn g(&self, psi: f64, c: f64) -> f64 {
        let base = psi * (self.alpha + self.beta) / (self.alpha * math::powf(c, self.beta));
        math::powf(base, 1.0 / (self.alpha - 1.0))
    }

    #[inline]
    fn h(&self, psi: f64, c: f64) -> f64 {
        self.delta * math::powf(psi, self.h_psi_exponent()) * math::powf(c, self.h_c_exponent())
    }

    fn budget_lambda_exponent(&self) -> Option<f64> {
        Some(1.0 / (self.alpha + self.beta - 1.0))
    }
}

fn positive(a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("arguments must be positive and finite, got ({a}, {b})")))
    }
}
