use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::audio::Label;
use crate::model::PdNet;
use crate::segment::SpeechChunk;

const EVAL_BATCH: usize = 32;

/// Confusion counts with PD as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut c = Confusion::default();
        for (truth, pred) in pairs {
            match (truth, pred) {
                (Label::PD, Label::PD) => c.tp += 1,
                (Label::HC, Label::PD) => c.fp += 1,
                (Label::PD, Label::HC) => c.fn_ += 1,
                (Label::HC, Label::HC) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// Set when precision, recall or F1 had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: usize, den: usize, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Result<Self, TrainError> {
        if c.total() == 0 {
            return Err(TrainError::EmptyTestSet);
        }
        let mut degenerate = false;
        let accuracy = (c.tp + c.tn) as f64 / c.total() as f64;
        let precision = ratio(c.tp, c.tp + c.fp, &mut degenerate);
        let recall = ratio(c.tp, c.tp + c.fn_, &mut degenerate);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            degenerate = true;
            0.0
        };
        Ok(Self {
            accuracy,
            precision,
            recall,
            f1,
            confusion: c,
            degenerate,
        })
    }

    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

/// Eval-mode class predictions. Equal logits go to HC.
pub fn predict(net: &PdNet, chunks: &[SpeechChunk]) -> Result<Vec<Label>, TrainError> {
    let mut out = Vec::with_capacity(chunks.len());
    for batch in chunks.chunks(EVAL_BATCH) {
        let refs: Vec<&[f64]> = batch.iter().map(|c| c.samples.as_slice()).collect();
        let logits = net.predict_logits(&refs)?;
        out.extend(
            logits
                .chunks(2)
                .map(|l| if l[1] > l[0] { Label::PD } else { Label::HC }),
        );
    }
    Ok(out)
}

/// Chunk-level metrics.
pub fn evaluate(net: &PdNet, chunks: &[SpeechChunk]) -> Result<Metrics, TrainError> {
    if chunks.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    let preds = predict(net, chunks)?;
    Metrics::from_confusion(Confusion::from_pairs(chunks.iter().map(|c| c.label).zip(preds)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingVote {
    pub recording: String,
    pub truth: Label,
    pub predicted: Label,
    pub pd_votes: usize,
    pub chunks: usize,
}

/// Majority vote per recording; a tie goes to HC. Sorted by recording.
pub fn recording_votes(chunks: &[SpeechChunk], preds: &[Label]) -> Vec<RecordingVote> {
    let mut acc: BTreeMap<&str, (Label, usize, usize)> = BTreeMap::new();
    for (c, p) in chunks.iter().zip(preds) {
        let e = acc.entry(&c.recording_ref).or_insert((c.label, 0, 0));
        e.1 += usize::from(*p == Label::PD);
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(r, (truth, pd, n))| RecordingVote {
            recording: r.to_string(),
            truth,
            predicted: if 2 * pd > n { Label::PD } else { Label::HC },
            pd_votes: pd,
            chunks: n,
        })
        .collect()
}
