use thiserror::Error;

/// Failures of the geometric conversions and fitting routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("edge length must be positive, got {0}")]
    InvalidEdgeLength(f64),
    #[error("matrix is not a proper rotation (orthonormality residual {residual:.3e}, det {det:.6})")]
    NotRotation { residual: f64, det: f64 },
    #[error("degenerate cube: {0}")]
    DegenerateCube(&'static str),
    #[error("cube violates projection constraints: {0}")]
    ProjectionViolated(String),
    #[error("ratio path singular, use matrix path: {0}")]
    RatioSingular(&'static str),
    #[error("view-degenerate cube (singular values {0:.3e}, {1:.3e})")]
    ViewDegenerate(f64, f64),
    #[error("invalid relative dimensions {0:?}")]
    InvalidDims([f64; 3]),
}

/// Failures reading, writing or validating dataset files and configs.
#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{what}: expected {expected} bytes, got {actual}")]
    Truncated {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("malformed container at byte {offset}: {msg}")]
    Container { offset: usize, msg: String },
    #[error("invalid label {id}: {msg}")]
    InvalidLabel { id: String, msg: String },
    #[error("predictions without ground truth: {}", .0.join(", "))]
    UnmatchedIds(Vec<String>),
    #[error("duplicate image_id {0}")]
    DuplicateId(String),
    #[error("no matched prediction/ground-truth pairs")]
    EmptyIntersection,
    #[error("invalid map size or shape: {0}")]
    Shape(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}
