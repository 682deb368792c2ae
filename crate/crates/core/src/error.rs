use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("field is not symmetric under x -> -x (max deviation {max_deviation:.3e}, tolerance {tolerance:.1e})")]
    SymmetryViolation { max_deviation: f64, tolerance: f64 },

    #[error("invalid parameter `{name}` = {value}: must lie in {range}")]
    InvalidParameter {
        name: String,
        value: String,
        range: String,
    },

    #[error("grid mismatch: {left} points vs {right} points")]
    GridMismatch { left: usize, right: usize },

    #[error("unsupported for this drift variant: {0}")]
    Unsupported(String),

    #[error("interaction kernel argument {value:.6} outside tabulated range [-{max:.6}, {max:.6}]")]
    KernelRange { value: f64, max: f64 },

    #[error("numerical blow-up at step {step} (t = {t:.6}): {reason}")]
    BlowUp { step: u64, t: f64, reason: String },

    #[error("time step too large: dt * L = {product:.3} >= 0.5 (witnessed drift Lipschitz constant {lipschitz:.3e})")]
    StepTooLarge { product: f64, lipschitz: f64 },

    #[error("drift fails the dissipativity diagnostic: {0}")]
    Dissipativity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &str, value: impl ToString, range: &str) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            value: value.to_string(),
            range: range.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidParameter { .. }
            | Error::Dissipativity(_)
            | Error::StepTooLarge { .. } => 2,
            Error::BlowUp { .. } => 3,
            Error::Io { .. } => 4,
            _ => 1,
        }
    }
}
