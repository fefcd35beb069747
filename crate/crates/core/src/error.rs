use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("region selects no elements")]
    EmptyRegion,

    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("degenerate element {index} (area {area:e})")]
    DegenerateElement { index: usize, area: f64 },

    #[error("no boundary value supplied for node {0}")]
    MissingBoundaryValue(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular system: pivot {pivot:e} at row {row}")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("iterative solver stalled: {0}")]
    NotConverged(String),

    #[error("iterate became non-finite at step {0} (time step too large?)")]
    NonFiniteIterate(usize),

    #[error("reference source is identically zero")]
    ZeroReference,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
