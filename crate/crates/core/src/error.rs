use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable image {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("zero-dimension image")]
    ZeroDimension,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("descriptor patch around ({x}, {y}) leaves the image")]
    PatchOutOfBounds { x: usize, y: usize },
    #[error("unknown template set {0:?}")]
    UnknownTemplateSet(String),
    #[error("malformed proposal at line {line}: {reason}")]
    MalformedProposal { line: usize, reason: String },
    #[error("map image {0} is already indexed")]
    DuplicateImage(u32),
    #[error("index is empty")]
    EmptyIndex,
    #[error("unlocalizable: query has no usable visual words")]
    Unlocalizable,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate place model: sigma is zero")]
    DegeneratePlace,
    #[error("unknown map image id {0}")]
    UnknownMapImage(u32),
    #[error("no reference features in map image")]
    NoReferenceFeatures,
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("no ground truth objects")]
    NoGroundTruth,
    #[error("infeasible generator config: {0}")]
    InfeasibleSpec(String),
    #[error("{0} unavailable")]
    Unavailable(String),
    #[error("bad artifact file: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
