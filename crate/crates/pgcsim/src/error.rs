use std::fmt;

/// Why a run stopped; each kind has its own exit code.
#[derive(Debug)]
pub enum RunError {
    /// Unreadable or malformed config, unknown keys, bad CSV for plotting.
    Config(String),
    /// Parameters rejected by the model (domain or finiteness), or a
    /// numerical routine that could not meet its contract.
    Validation(String),
    /// A gated verification returned a fail verdict.
    Verification(String),
    /// Output could not be written.
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Validation(_) => 3,
            RunError::Verification(_) => 4,
            RunError::Io(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Validation(m) => write!(f, "validation error: {m}"),
            RunError::Verification(m) => write!(f, "verification failed: {m}"),
            RunError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<pgcsim_core::Error> for RunError {
    fn from(e: pgcsim_core::Error) -> Self {
        use pgcsim_core::Error as E;
        match e {
            E::Config(_) | E::GridMismatch(_) => RunError::Config(e.to_string()),
            _ => RunError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

pub type RunResult<T> = Result<T, RunError>;
