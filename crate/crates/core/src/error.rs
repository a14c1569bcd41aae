use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation matrix is not a proper rotation (max deviation {deviation:.3e})")]
    InvalidRotation { deviation: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error("filter used before initialization")]
    Uninitialized,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("track is infeasible: curvature {curvature:.3} 1/m at waypoint {index} exceeds {limit:.3} 1/m")]
    InfeasibleTrack {
        index: usize,
        curvature: f64,
        limit: f64,
    },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("ambiguous target: {clusters} separated clusters in window {window}")]
    AmbiguousTarget { window: i64, clusters: usize },

    #[error("ground truth is empty")]
    EmptyTruth,

    #[error("invalid value for `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{path}: row {row}: {reason}")]
    Parse {
        path: String,
        row: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (configuration, files, rows)
    /// as opposed to failures while computing.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Parse { .. } | Error::Io { .. } | Error::Json { .. }
        )
    }
}
