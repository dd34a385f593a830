use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::predictor::TrainReport;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse record name {0:?}")]
    NameParse(String),

    #[error("no parseable face records under {0}")]
    EmptyCorpus(PathBuf),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image file: {0}")]
    CorruptFile(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("image {width}x{height} is smaller than the transform block {block}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        block: usize,
    },

    #[error("inverse transform left a non-negligible imaginary part: {0}")]
    NonNegligibleImaginary(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("sequence too short: {0}")]
    SequenceTooShort(String),

    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        report: Box<TrainReport>,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no eligible subjects to evaluate")]
    NoEligibleSubjects,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid artifact: {0}")]
    InvalidArtifact(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
