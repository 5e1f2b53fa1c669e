use std::io;

use thiserror::Error;

/// Errors produced anywhere in the map, planning and evaluation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate vector: norm is zero or not finite")]
    DegenerateVector,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model corrupt: {0}")]
    ModelCorrupt(String),

    #[error("training diverged: non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("unknown object id {0}")]
    UnknownObject(u32),

    #[error("unknown node id {0}")]
    UnknownNode(u32),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("world generation failed: {0}")]
    WorldGeneration(String),

    #[error("unknown method {0:?}")]
    UnknownMethod(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable tag used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateVector => "degenerate_vector",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ModelCorrupt(_) => "model_corrupt",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Format(_) => "format",
            Error::UnknownObject(_) => "unknown_object",
            Error::UnknownNode(_) => "unknown_node",
            Error::Empty(_) => "empty_input",
            Error::WorldGeneration(_) => "world_generation",
            Error::UnknownMethod(_) => "unknown_method",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
