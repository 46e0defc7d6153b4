use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("chord grid ends at {chord_hi:e} m but the largest chord is {needed:e} m")]
    ChordGridTooShort { chord_hi: f64, needed: f64 },

    #[error("CFL condition violated: Courant number {courant} exceeds 1 for shape {shape}")]
    Cfl { shape: usize, courant: f64 },

    #[error("normal equations are singular (smallest singular value {sigma_min:e})")]
    Singular { sigma_min: f64 },

    #[error("observer diverged: misfit grew from {from:e} to {to:e} within 10 iterations")]
    Divergence { from: f64, to: f64 },

    #[error("{solver} did not converge within {iterations} iterations")]
    NoConvergence { solver: String, iterations: usize },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("configuration is invalid:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 2 for validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Cfl { .. } | Error::Singular { .. } | Error::Divergence { .. } | Error::NoConvergence { .. } => 3,
            _ => 2,
        }
    }
}
