//! One document holding every tunable of a run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::knn::DEFAULT_K;
use crate::segment::{EnvelopeParams, Strategy};
use crate::train::Hyper;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    pub strategy: Strategy,
    pub words_per_chunk: usize,
    pub snap_tolerance_s: f64,
    pub envelope: EnvelopeParams,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Hybrid,
            words_per_chunk: 1,
            snap_tolerance_s: 0.05,
            envelope: EnvelopeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    pub working_rate: u32,
    pub segment: SegmentConfig,
    pub chunk_len: usize,
    pub train: Hyper,
    pub iterations: usize,
    pub test_frac: f64,
    pub knn_k: usize,
    pub top_words: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            working_rate: crate::audio::DEFAULT_WORKING_RATE,
            segment: SegmentConfig::default(),
            chunk_len: 256,
            train: Hyper::default(),
            iterations: 9,
            test_frac: 0.2,
            knn_k: DEFAULT_K,
            top_words: crate::gradcam::DEFAULT_TOP_WORDS,
        }
    }
}

impl RunConfig {
    /// Parse JSON, or TOML when the path ends in `.toml`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.working_rate == 0 {
            return bad("working_rate must be positive".into());
        }
        if self.chunk_len < crate::model::MIN_CHUNK_LEN {
            return bad(format!("chunk_len must be at least {}", crate::model::MIN_CHUNK_LEN));
        }
        if self.segment.words_per_chunk == 0 {
            return bad("words_per_chunk must be positive".into());
        }
        if !(self.segment.snap_tolerance_s >= 0.0) {
            return bad("snap_tolerance_s must be non-negative".into());
        }
        self.segment.envelope.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return bad("test_frac must lie in (0, 1)".into());
        }
        if self.knn_k % 2 == 0 {
            return bad(format!("knn_k must be odd, got {}", self.knn_k));
        }
        Ok(())
    }

    /// Key-sorted compact JSON.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// Hex SHA-256 of [`RunConfig::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
