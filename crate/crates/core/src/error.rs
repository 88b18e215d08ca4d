use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A point lies outside the domain of an inverse retraction or log map.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data admits no well-defined answer (e.g. zero Euclidean mean).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A small linear system could not be solved.
    #[error("singular system: {0}")]
    Singular(String),

    /// A descent step was requested at a stationary point.
    #[error("no descent direction: gradient norm is zero")]
    NoDescent,

    /// The adaptive smoothing loop ran out of doublings.
    #[error("adaptation failed after {doublings} doublings (kappa reached {kappa:e})")]
    Adaptation { doublings: usize, kappa: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}:{line}: negative index {value}", path.display())]
    Index { path: PathBuf, line: usize, value: i64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Domain(_))
    }

    /// Errors caused by a bad request rather than by numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::Index { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
