use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulator and solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("all-zero gradient{}", user.map(|u| format!(" from user {u}")).unwrap_or_default())]
    ZeroGradient { user: Option<usize> },

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("empty selection")]
    EmptySelection,

    #[error("numeric degeneracy in {0}")]
    NumericDegeneracy(&'static str),

    #[error("cannot project a zero vector onto the unit sphere")]
    DegenerateProjection,

    #[error("solver failure: {reason} (after {iterations} recorded iterations)")]
    SolverFailure { reason: String, iterations: usize },

    #[error("could not pack {elements} antennas at the requested spacing after {attempts} attempts")]
    Packing { elements: usize, attempts: usize },

    #[error("instance too large: {0}")]
    Size(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data format error: {0}")]
    Format(String),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite")))
    }
}
