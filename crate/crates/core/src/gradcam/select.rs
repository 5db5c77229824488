use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GradCamError;

pub const DEFAULT_TOP_WORDS: usize = 10;

/// One chunk's importance within its recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentImportance {
    pub recording: String,
    pub chunk_index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub words: Vec<String>,
    /// Mean of the chunk's map before normalization.
    pub raw_score: f64,
    /// Score after per-recording normalization.
    pub score: f64,
    pub selected: bool,
}

/// Scalar importance of a chunk: the mean of its map.
pub fn chunk_score(map: &[f64]) -> f64 {
    crate::util::mean(map)
}

/// Divide every `raw_score` by the largest magnitude in the recording.
/// Returns `true` (degenerate) when all scores are zero.
pub fn normalize_per_recording(scores: &mut [SegmentImportance]) -> Result<bool, GradCamError> {
    if scores.is_empty() {
        return Err(GradCamError::EmptyRecording);
    }
    let max = scores.iter().map(|s| s.raw_score.abs()).fold(0.0, f64::max);
    if max == 0.0 {
        scores.iter_mut().for_each(|s| s.score = 0.0);
        return Ok(true);
    }
    scores.iter_mut().for_each(|s| s.score = s.raw_score / max);
    Ok(false)
}

/// Percentile `q` in [0, 1] by linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub threshold: f64,
    pub selected: usize,
    /// Only one score, so nothing can exceed the threshold.
    pub degenerate: bool,
}

/// Flag chunks whose normalized score strictly exceeds the 90th percentile.
pub fn select_top_decile(scores: &mut [SegmentImportance]) -> Result<Selection, GradCamError> {
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let threshold = percentile(&values, 0.9).ok_or(GradCamError::EmptyInput)?;
    let mut selected = 0;
    for s in scores.iter_mut() {
        s.selected = s.score > threshold;
        selected += usize::from(s.selected);
    }
    Ok(Selection {
        threshold,
        selected,
        degenerate: scores.len() == 1,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCount {
    pub word: String,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordFrequencyReport {
    pub rows: Vec<WordCount>,
}

/// Word counts over the selected chunks, most frequent first, ties alphabetical.
pub fn word_frequency_report(scores: &[SegmentImportance], top_n: usize) -> WordFrequencyReport {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in scores.iter().filter(|s| s.selected) {
        for w in &s.words {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut rows: Vec<WordCount> = counts
        .into_iter()
        .map(|(w, c)| WordCount {
            word: w.to_string(),
            count: c,
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.word.cmp(&b.word)));
    rows.truncate(top_n);
    WordFrequencyReport { rows }
}
