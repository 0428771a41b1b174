use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("constraint matrix is rank deficient: numerical row rank {rank} < {rows}")]
    RankDeficient { rank: usize, rows: usize },

    #[error(
        "initial estimate violates the constraint: |A theta - d|_inf = {violation:e} > {tol:e}"
    )]
    InfeasibleInitialEstimate { violation: f64, tol: f64 },

    #[error("integration diverged at t = {t}: {reason}")]
    Diverged { t: f64, reason: String },

    #[error("concurrent-learning run never satisfied finite excitation")]
    MissingFe,

    #[error("failed to parse scenario: {0}")]
    Parse(String),

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
