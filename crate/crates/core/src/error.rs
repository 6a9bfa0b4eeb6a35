use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate hull: {0}")]
    DegenerateHull(String),

    #[error("degenerate triangulation: {0}")]
    DegenerateTriangulation(String),

    #[error("insufficient points: need {needed}, have {have}")]
    InsufficientPoints { needed: usize, have: usize },

    #[error("no visible points from any viewpoint")]
    NoVisiblePoints,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("corrupt weights ({tensor}): {reason}")]
    CorruptWeights { tensor: String, reason: String },

    #[error("feature cache was computed for a different cloud or model")]
    CacheMismatch,

    #[error("unknown backend `{0}`")]
    UnknownBackend(String),

    #[error("parse error in {context}: {reason}")]
    Parse { context: String, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn corrupt(tensor: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::CorruptWeights {
            tensor: tensor.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(context: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CorruptWeights { .. } | Error::CacheMismatch => 3,
            Error::DegenerateHull(_)
            | Error::DegenerateTriangulation(_)
            | Error::InsufficientPoints { .. }
            | Error::NoVisiblePoints => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
