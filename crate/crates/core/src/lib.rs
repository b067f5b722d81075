//! Numerical core for the continuous-time public-good contribution model.
//!
//! Agents split wealth between private consumption `x` and irreversible,
//! cumulative contributions `C` to a public good. Prices are discounted
//! exponential factors driven by Brownian motion. The crate provides
//!
//! - [`model`]: Cobb-Douglas primitives, the inverse marginal `g` and the
//!   reduced marginal `h = u_c(g(psi, c), c)`, and parameter validation;
//! - [`paths`]: seeded simulation of the factor processes, running extrema
//!   (grid-monitored or exact Brownian-bridge), discounted integrals and
//!   Monte Carlo reduction;
//! - [`closed_form`]: explicit planner and Nash policies, the constants
//!   `A`, `l0`, `kappa`, analytic Black-Scholes integrals, the free-rider
//!   ratio and the reversible benchmark;
//! - [`solver`]: backward induction on a recombining binomial lattice for
//!   the signal process whose running supremum is the optimal contribution;
//! - [`foc`]: Monte Carlo verification of the stochastic Kuhn-Tucker
//!   conditions.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled; `std` adds parallel ensemble evaluation through rayon.
#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod closed_form;
mod error;
pub mod foc;
pub(crate) mod math;
pub mod model;
pub mod paths;
pub mod solver;

pub use error::{Error, Result};
pub use model::{CobbDouglasUtility, Horizon, ModelParams, UtilityContract, ValidationMode};
