use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("state is not on the solver grid: {0}")]
    OffGrid(String),

    #[error("state is not on an active boundary: {0}")]
    NotOnBoundary(String),

    #[error("inverse flow time requested backwards: from {from} to {to}")]
    BackwardFlow { from: f64, to: f64 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("value iteration did not converge after {iterations} sweeps (last sup-norm {last:.6})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("value iteration diverged at sweep {iteration}: {reason}")]
    Divergence {
        iteration: usize,
        reason: String,
        history: Vec<f64>,
    },

    #[error("not a value table file (bad magic bytes)")]
    BadMagic,

    #[error("unsupported table format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("table was built for a different configuration (fingerprint {found}, expected {expected})")]
    FingerprintMismatch { found: String, expected: String },

    #[error("value table file is truncated or corrupt: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
