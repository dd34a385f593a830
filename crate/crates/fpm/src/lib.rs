//! Face aging prediction pipeline.
//!
//! Given an age-ordered sequence of grayscale face images of one subject,
//! the pipeline normalizes each image, takes a blockwise windowed Fourier
//! transform, projects the flattened spectra onto a PCA basis to obtain
//! compact global feature vectors, and trains a small backpropagation
//! network to map a sliding window of consecutive feature vectors to the
//! next one. A predicted feature vector is mapped back through the PCA
//! reconstruction and the inverse transform to produce an output face
//! image, which is scored against ground truth by pixel correlation.
//!
//! The stages live in their own modules:
//!
//! - [`dataset`]: corpus ingestion, PGM image I/O, per-subject sequences
//! - [`imageproc`]: resizing and per-image z-score normalization
//! - [`spectral`]: blockwise 2-D short-time Fourier analysis and inversion
//! - [`features`]: PCA fitting, projection, reconstruction
//! - [`predictor`]: the sliding-window backprop network
//! - [`evalmatch`]: match scoring and the leave-last-out protocol
//! - [`pipeline`], [`config`], [`artifact`], [`fixture`], [`commands`]:
//!   glue, configuration, persistence and the CLI surface

pub mod artifact;
pub mod commands;
pub mod config;
pub mod dataset;
mod error;
pub mod evalmatch;
pub mod features;
pub mod fixture;
pub mod imageproc;
pub mod pipeline;
pub mod predictor;
pub mod spectral;

pub use config::{PipelineConfig, Scope};
pub use dataset::{Corpus, FaceRecord, RawImage, SubjectSequence};
pub use error::{Error, Result};
pub use evalmatch::{EvalReport, MatchScore, SubjectReport};
pub use features::PcaBasis;
pub use imageproc::{ImageTensor, NormParams};
pub use predictor::{MlpModel, TrainReport};
