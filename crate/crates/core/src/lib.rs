//! Interpretable voice-based screening pipeline.
//!
//! Recordings are cut into word chunks, a two-block 1D CNN is trained on the
//! raw chunk waveforms, and Grad-CAM over the last convolutional block scores
//! each chunk's contribution to a class decision. Evaluation runs repeated
//! subject-disjoint stratified holdouts and reports Table-style aggregates.
//!
//! Module map:
//!
//! - [`audio`]: WAV I/O, mono mixdown, linear resampling, dataset manifests
//! - [`segment`]: RMS envelope, silence / word-timestamp / hybrid chunking
//! - [`autodiff`]: tape-based reverse mode over the handful of ops the network needs
//! - [`model`]: the network itself, initialization and the `PDN1` file format
//! - [`train`]: Adam training loop, splits, metrics, aggregation, paired t-test
//! - [`gradcam`]: attribution maps, per-recording selection, reports and SVG
//! - [`knn`]: handcrafted features and a brute-force KNN baseline
//! - [`synth`]: seeded synthetic corpus with planted class evidence
//! - [`pipeline`]: end-to-end experiment used by the CLI and the acceptance suite

pub mod audio;
pub mod autodiff;
pub mod config;
pub mod error;
pub mod gradcam;
pub mod knn;
pub mod model;
pub mod pipeline;
pub mod segment;
pub mod synth;
pub mod train;
mod util;

pub use audio::{AudioRecording, Label, RecordingKind};
pub use config::RunConfig;
pub use error::{Error, ErrorKind, Result};
pub use model::PdNet;
pub use segment::SpeechChunk;

/// Crate version embedded in every artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
