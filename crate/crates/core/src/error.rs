use thiserror::Error;

/// Errors raised by the simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("gate is not unitary (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("size guard exceeded: {0}")]
    Guard(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("trace invariant violated: {0}")]
    Invariant(String),

    #[error("infeasible run: estimated {estimate_mb:.1} MiB exceeds limit of {limit_mb:.1} MiB")]
    Infeasible { estimate_mb: f64, limit_mb: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
