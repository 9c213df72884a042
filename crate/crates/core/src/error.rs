use std::path::PathBuf;

use thiserror::Error;

use crate::grid::GridSpec;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {left:?} vs {right:?}")]
    GridMismatch { left: GridSpec, right: GridSpec },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter constraint violated: {0}")]
    Constraint(String),

    #[error("resolution refused: {0}")]
    Resolution(String),

    #[error("numerical blow-up at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("approaching breakdown: guard tripped at t = {time} ({reason}); last valid time {last_valid_time}")]
    GuardTrip {
        time: f64,
        last_valid_time: f64,
        reason: String,
    },

    #[error("config errors:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// 2 config, 3 guard trip, 4 resolution refusal, 5 blow-up, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::GuardTrip { .. } => 3,
            Error::Resolution(_) => 4,
            Error::BlowUp { .. } => 5,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
