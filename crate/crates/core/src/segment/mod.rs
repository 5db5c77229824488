//! Cutting recordings into word chunks.
//!
//! Three strategies are available: runs of RMS energy above a relative
//! threshold, fixed groups of consecutive word timestamps, and a hybrid
//! that moves each word-group boundary to the quietest envelope frame
//! nearby. [`fit_chunk`] then brings every chunk to the network's input
//! length.

mod dump;
mod envelope;
mod strategies;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioError, Label};

pub use dump::{read_chunk_dump, write_chunk_dump, ChunkDumpHeader};
pub use envelope::{rms_envelope, EnvelopePoint};
pub use strategies::{
    fit_chunk, read_timestamps, segment, segment_by_silence, segment_by_words, segment_hybrid,
    write_timestamps, Strategy,
};

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("audio has no samples")]
    EmptyAudio,
    #[error("no frame crossed the silence threshold")]
    NoSpeechDetected,
    #[error("no word timestamps")]
    EmptyTimestamps,
    #[error("timestamp {index} ({start_s}..{end_s} s) outside recording of {duration_s} s")]
    TimestampOutOfRange {
        index: usize,
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error("invalid timestamps: {0}")]
    InvalidTimestamps(String),
    #[error("chunk has no samples")]
    EmptyChunk,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("chunk dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

impl SegmentError {
    pub(crate) fn is_input(&self) -> bool {
        matches!(
            self,
            SegmentError::Dump(_)
                | SegmentError::Audio(_)
                | SegmentError::InvalidTimestamps(_)
                | SegmentError::TimestampOutOfRange { .. }
        )
    }
}

/// One word as produced by an external recognizer (or the synthetic generator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTimestamp {
    pub word: String,
    #[serde(rename = "start")]
    pub start_s: f64,
    #[serde(rename = "end")]
    pub end_s: f64,
}

impl WordTimestamp {
    pub fn new(word: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self {
            word: word.into(),
            start_s,
            end_s,
        }
    }
}

/// A window of a recording plus the words it covers. This is the network's input unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechChunk {
    pub samples: Vec<f64>,
    pub start_s: f64,
    pub end_s: f64,
    pub words: Vec<String>,
    pub recording_ref: String,
    pub subject_id: String,
    pub label: Label,
    /// Position of this chunk within its recording.
    pub index: usize,
}

/// RMS envelope and silence-detection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeParams {
    pub window_s: f64,
    pub hop_s: f64,
    /// Fraction of the peak RMS counted as speech.
    pub rel_threshold: f64,
    pub min_silence_s: f64,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        Self {
            window_s: 0.025,
            hop_s: 0.010,
            rel_threshold: 0.1,
            min_silence_s: 0.15,
        }
    }
}

impl EnvelopeParams {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if !(self.window_s > 0.0) {
            return Err(SegmentError::InvalidParameter("window_s must be > 0".into()));
        }
        if !(self.hop_s > 0.0) {
            return Err(SegmentError::InvalidParameter("hop_s must be > 0".into()));
        }
        if !(self.rel_threshold > 0.0 && self.rel_threshold < 1.0) {
            return Err(SegmentError::InvalidParameter(
                "rel_threshold must lie in (0, 1)".into(),
            ));
        }
        if !(self.min_silence_s >= 0.0) {
            return Err(SegmentError::InvalidParameter("min_silence_s must be >= 0".into()));
        }
        Ok(())
    }
}
