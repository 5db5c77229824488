use std::path::PathBuf;

use thiserror::Error;

use crate::audio::AudioError;
use crate::autodiff::AutodiffError;
use crate::gradcam::GradCamError;
use crate::knn::KnnError;
use crate::model::ModelError;
use crate::segment::SegmentError;
use crate::synth::SynthError;
use crate::train::TrainError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error, one variant per module plus I/O and configuration.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    GradCam(#[from] GradCamError),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Config,
    Runtime,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::Audio(_) | Error::ArtifactMismatch(_) => {
                ErrorKind::Input
            }
            Error::Model(e) | Error::Train(TrainError::Model(e)) | Error::GradCam(GradCamError::Model(e))
                if e.is_input() =>
            {
                ErrorKind::Input
            }
            Error::Segment(e) if e.is_input() => ErrorKind::Input,
            Error::Synth(SynthError::Audio(_) | SynthError::Io { .. }) => ErrorKind::Input,
            Error::Config(_) | Error::Synth(SynthError::InvalidConfig(_)) | Error::Train(TrainError::InvalidHyper(_)) => {
                ErrorKind::Config
            }
            _ => ErrorKind::Runtime,
        }
    }
}
