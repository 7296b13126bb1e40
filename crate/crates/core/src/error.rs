use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite (offending eigenvalue or pivot {eigenvalue:e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("matrix is not stable (spectral radius {rho})")]
    UnstableMatrix { rho: f64 },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("invalid rank {rank} for dimension {n} (need 1 <= rank <= n)")]
    InvalidRank { rank: usize, n: usize },

    #[error("reference matrix has zero norm")]
    ZeroReference,

    #[error("eigenvalue iteration did not converge for a {0}x{0} matrix")]
    NoConvergence(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in the numerics rather than in
    /// arguments or the filesystem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::UnstableMatrix { .. }
                | Error::SingularSystem(_)
                | Error::NoConvergence(_)
                | Error::ZeroReference
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
