//! Audio ingest: WAV parsing and writing, mono mixdown, resampling to the
//! working rate, and the JSON dataset manifest.

mod manifest;
mod resample;
mod wav;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{DatasetManifest, ManifestEntry};
pub use resample::{resample, resample_linear};
pub use wav::{read_wav, write_wav, Encoding, WavData};

/// Default working sample rate in Hz.
pub const DEFAULT_WORKING_RATE: u32 = 16_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AudioError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("malformed RIFF: {0}")]
    MalformedRiff(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio has no samples")]
    EmptyAudio,
    #[error("invalid sample rate {0}")]
    InvalidRate(u32),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

/// Diagnostic class. PD is the positive class everywhere metrics are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    HC,
    PD,
}

impl Label {
    /// Class index used for network logits.
    pub fn index(self) -> usize {
        match self {
            Label::HC => 0,
            Label::PD => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::HC),
            1 => Some(Label::PD),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::HC => "HC",
            Label::PD => "PD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordingKind {
    Vowel,
    Syllable,
    Text,
}

/// A mono recording at a known rate, tagged with its subject and class.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioRecording {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub subject_id: String,
    pub label: Label,
    pub kind: RecordingKind,
    pub source_path: String,
}

impl AudioRecording {
    /// Wrap decoded samples with manifest metadata. Amplitudes are clipped to [-1, 1].
    pub fn new(
        samples: Vec<f64>,
        sample_rate: u32,
        subject_id: impl Into<String>,
        label: Label,
        kind: RecordingKind,
        source_path: impl Into<String>,
    ) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::EmptyAudio);
        }
        if sample_rate == 0 {
            return Err(AudioError::InvalidRate(sample_rate));
        }
        Ok(Self {
            samples: samples.into_iter().map(clip).collect(),
            sample_rate,
            subject_id: subject_id.into(),
            label,
            kind,
            source_path: source_path.into(),
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Read the WAV named by a manifest entry and resample it to `working_rate`.
    pub fn load(entry: &ManifestEntry, base_dir: &Path, working_rate: u32) -> Result<Self, AudioError> {
        let path = base_dir.join(&entry.path);
        let wav = read_wav(&path)?;
        let rec = AudioRecording::new(
            wav.samples,
            wav.sample_rate,
            entry.subject.clone(),
            entry.label,
            entry.kind,
            entry.path.clone(),
        )?;
        resample(&rec, working_rate)
    }
}

pub(crate) fn clip(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}
