use thiserror::Error;

/// Errors produced by mesh handling, model building, registration and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("triangle {triangle} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        count: usize,
    },

    #[error("triangle {0} is degenerate (zero area)")]
    DegenerateTriangle(usize),

    #[error("vertex {0} has a zero accumulated normal (not referenced by any triangle)")]
    IsolatedVertex(usize),

    #[error("mesh has no triangles")]
    EmptyMesh,

    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("corpus generation failed: {0}")]
    Corpus(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
