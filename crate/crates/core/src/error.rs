use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A model invariant or an operation precondition does not hold.
    Domain(String),
    /// `sqrt(2r) > sigma * alpha / (1 - alpha - beta)` fails, so the
    /// Black-Scholes constants diverge.
    Finiteness { lhs: f64, rhs: f64 },
    /// Malformed simulation or solver configuration.
    Config(String),
    /// A grid index is outside the simulated range.
    Index { index: usize, len: usize },
    /// A path that must be nondecreasing decreases at `step`.
    Monotonicity { step: usize, drop: f64 },
    /// No sign change of the backward-equation residual was found.
    Bracket { step: usize, node: usize, detail: String },
    /// Bisection exhausted its iterations above tolerance.
    Tolerance { step: usize, node: usize, residual: f64 },
    /// A sample path does not live on the lattice time grid.
    GridMismatch(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Finiteness { lhs, rhs } => write!(
                f,
                "finiteness condition violated: sqrt(2r) = {lhs} <= sigma*alpha/(1-alpha-beta) = {rhs}"
            ),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Index { index, len } => write!(f, "index {index} out of range for grid of {len} points"),
            Error::Monotonicity { step, drop } => {
                write!(f, "path decreases by {drop} at step {step}")
            }
            Error::Bracket { step, node, detail } => {
                write!(f, "no root bracket at step {step}, node {node}: {detail}")
            }
            Error::Tolerance { step, node, residual } => write!(
                f,
                "bisection did not converge at step {step}, node {node} (relative residual {residual:e})"
            ),
            Error::GridMismatch(msg) => write!(f, "grid mismatch: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
