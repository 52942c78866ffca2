use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation angle {angle} is at the log-map branch cut (pi)")]
    BranchAmbiguity { angle: f64 },

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("relocalization inconsistent: estimated scale {0} is not positive")]
    RelocalizationInconsistent(f64),

    #[error("insufficient overlap for relocalization: covisibility {covisibility:.3} < {threshold:.3}")]
    InsufficientOverlap { covisibility: f64, threshold: f64 },

    #[error("missing constraint between submaps {0} and {1}")]
    MissingConstraint(usize, usize),

    #[error("missing delta for keyframe {0}")]
    MissingDelta(u32),

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("normal equations are singular; component without a fixed node: {component:?}")]
    SingularSystem { component: Vec<usize> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
