use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema level {level} has no labels")]
    EmptyLevel { level: usize },

    #[error("schema has no levels")]
    NoLevels,

    #[error("parent map of level {level} has no entry for label {label}")]
    MissingParent { level: usize, label: usize },

    #[error("parent map of level {level} sends label {label} to {parent}, outside 0..{limit}")]
    OutOfRangeParent {
        level: usize,
        label: usize,
        parent: usize,
        limit: usize,
    },

    #[error("label {label} at level {level} is outside 0..{limit}")]
    OutOfRangeLabel { level: usize, label: usize, limit: usize },

    #[error("point {point}: label at level {level} does not descend from its level {} label", .level - 1)]
    IncoherentLabels { point: usize, level: usize },

    #[error("shape has {got} {what}, expected {expected}")]
    ShapeMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid probability field: {0}")]
    InvalidField(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no point survives clipping in both perturbed copies")]
    EmptyCorrespondence,

    #[error("no labeled point in the correspondence set")]
    NoLabeledPoints,

    #[error("segmentation weight is positive but no labels were given")]
    MissingLabels,

    #[error("no donor subtree with label {label} at level {level}")]
    NoDonorFound { level: usize, label: usize },

    #[error("donor subtree is degenerate ({0})")]
    DegenerateDonor(String),

    #[error("prediction/ground-truth mismatch: {0}")]
    ShapeCountMismatch(String),

    #[error("unknown category id {0}")]
    UnknownCategory(usize),

    #[error("invalid category spec: {0}")]
    InvalidSpec(String),

    #[error("labeled fraction {0} is outside (0, 1]")]
    InvalidFraction(f64),

    #[error("labeled pool is empty")]
    EmptyLabeledPool,

    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },

    #[error("{path}:{line}: {msg}")]
    SchemaMismatch { path: String, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
