use thiserror::Error;

/// Errors produced by the skeleton pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown topology `{0}`")]
    UnknownTopology(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("malformed stream record: {0}")]
    MalformedRecord(String),
    #[error("joint count mismatch: expected {expected}, got {got}")]
    JointCountMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate at joint {joint}")]
    NonFiniteCoordinate { joint: usize },
    #[error("frame index {next} does not follow {prev}")]
    OutOfOrderFrame { prev: u64, next: u64 },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("rotation matrix is not orthonormal with determinant +1")]
    NonOrthonormalRotation,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sample size must be even and >= 2, got {0}")]
    InvalidSampleSize(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("model layout version {found} not supported (expected {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("non-finite loss (numeric failure) at step {0}")]
    NumericFailure(usize),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
