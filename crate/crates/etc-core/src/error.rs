//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("not positive definite")]
    NotPositiveDefinite,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("layer index {index} out of range 1..={n_layers}")]
    LayerOutOfRange { index: usize, n_layers: usize },

    #[error("missing labels")]
    MissingLabels,

    #[error("misaligned lengths: {left} vs {right}")]
    MisalignedLengths { left: usize, right: usize },

    #[error("row {row}: label {label} out of range for {class_count} classes")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        class_count: usize,
    },

    #[error("insufficient samples: needed {needed}, available {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("{path}: {detail} (byte {offset})")]
    IdxFormat {
        path: PathBuf,
        offset: u64,
        detail: String,
    },

    #[error("{path}: {detail}")]
    CsvFormat { path: PathBuf, detail: String },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Tags errors with the pipeline stage that produced them.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
