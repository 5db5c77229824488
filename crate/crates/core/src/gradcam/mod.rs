//! Grad-CAM over the last convolutional block, per-recording normalization,
//! top-decile selection and the word-frequency report.

mod render;
mod select;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Mode, Tape, Var};
use crate::model::{ModelError, PdNet, CLASSES};
use crate::segment::SpeechChunk;

pub use render::{class_pair_svg, recording_heatmap_svg, write_attribution_csv, ATTRIBUTION_HEADER};
pub use select::{
    chunk_score, normalize_per_recording, percentile, select_top_decile, word_frequency_report, Selection,
    SegmentImportance, WordCount, WordFrequencyReport, DEFAULT_TOP_WORDS,
};

#[derive(Debug, Error, PartialEq)]
pub enum GradCamError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("class {class} out of range for {classes} classes")]
    InvalidClass { class: usize, classes: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("results target different classes")]
    MixedClasses,
    #[error("recording has no chunks")]
    EmptyRecording,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Attribution for one chunk and one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCamResult {
    /// Signed `L^c(t)`, one value per timestep.
    pub map: Vec<f64>,
    /// Pooled gradient per feature map.
    pub alpha: Vec<f64>,
    pub class_id: usize,
    pub chunk_ref: String,
}

/// `alpha_k = mean_t grad[k, t]` over a `(K, T)` gradient.
pub fn pooled_weights(grad: &[f64], k: usize, t: usize) -> Vec<f64> {
    grad.chunks(t).take(k).map(|row| row.iter().sum::<f64>() / t as f64).collect()
}

/// `L(t) = sum_k alpha_k A[k, t]` over a `(K, T)` activation.
pub fn weighted_map(alpha: &[f64], activations: &[f64], t: usize) -> Vec<f64> {
    let mut out = vec![0.0; t];
    for (a, row) in alpha.iter().zip(activations.chunks(t)) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += a * v;
        }
    }
    out
}

/// Grad-CAM on an arbitrary tape: `score` is a scalar (or a `(N, C)` logit
/// block seeded with `seed`), `activations` is `(K, T)` or `(N, K, T)`.
/// Returns one `(alpha, map)` pair per sample.
pub fn cam_on_tape(
    tape: &mut Tape,
    score: Var,
    seed: &[f64],
    activations: Var,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>, GradCamError> {
    tape.backward_to(score, seed, activations)?;
    let (n, k, t) = match *tape.value(activations).shape() {
        [k, t] => (1, k, t),
        [n, k, t] => (n, k, t),
        ref s => return Err(GradCamError::ShapeMismatch(format!("activations of shape {s:?}"))),
    };
    let a = tape.value(activations).values();
    let g = tape.grad(activations);
    Ok((0..n)
        .map(|i| {
            let span = i * k * t..(i + 1) * k * t;
            let alpha = pooled_weights(&g[span.clone()], k, t);
            let map = weighted_map(&alpha, &a[span], t);
            (alpha, map)
        })
        .collect())
}

const CAM_BATCH: usize = 32;

/// Grad-CAM for several chunks against the same class. Eval mode keeps the
/// samples independent, so one seeded backward pass serves the whole batch.
pub fn grad_cam_batch(net: &PdNet, chunks: &[SpeechChunk], class_id: usize) -> Result<Vec<GradCamResult>, GradCamError> {
    if class_id >= CLASSES {
        return Err(GradCamError::InvalidClass {
            class: class_id,
            classes: CLASSES,
        });
    }
    let mut out = Vec::with_capacity(chunks.len());
    for batch in chunks.chunks(CAM_BATCH) {
        let refs: Vec<&[f64]> = batch.iter().map(|c| c.samples.as_slice()).collect();
        if let Some(c) = batch.iter().find(|c| c.samples.len() != net.chunk_len()) {
            return Err(GradCamError::ShapeMismatch(format!(
                "chunk of {} samples, network expects {}",
                c.samples.len(),
                net.chunk_len()
            )));
        }
        let mut pass = net.forward(&refs, Mode::Eval)?;
        let mut seed = vec![0.0; batch.len() * CLASSES];
        seed.iter_mut().skip(class_id).step_by(CLASSES).for_each(|s| *s = 1.0);
        let cams = cam_on_tape(&mut pass.tape, pass.logits, &seed, pass.activations)?;
        out.extend(batch.iter().zip(cams).map(|(c, (alpha, map))| GradCamResult {
            map,
            alpha,
            class_id,
            chunk_ref: chunk_ref(c),
        }));
    }
    Ok(out)
}

pub fn grad_cam(net: &PdNet, chunk: &SpeechChunk, class_id: usize) -> Result<GradCamResult, GradCamError> {
    Ok(grad_cam_batch(net, std::slice::from_ref(chunk), class_id)?.remove(0))
}

/// `recording#index`.
pub fn chunk_ref(c: &SpeechChunk) -> String {
    format!("{}#{}", c.recording_ref, c.index)
}

/// Pointwise mean of maps that all target `class_id`.
pub fn class_averaged_map(results: &[GradCamResult], class_id: usize) -> Result<Vec<f64>, GradCamError> {
    let first = results.first().ok_or(GradCamError::EmptyInput)?;
    if results.iter().any(|r| r.class_id != class_id) {
        return Err(GradCamError::MixedClasses);
    }
    let t = first.map.len();
    if results.iter().any(|r| r.map.len() != t) {
        return Err(GradCamError::ShapeMismatch("maps differ in length".into()));
    }
    let mut out = vec![0.0; t];
    for r in results {
        out.iter_mut().zip(&r.map).for_each(|(o, v)| *o += v);
    }
    let n = results.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluation() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let alpha = pooled_weights(&[1.0; 4], 2, 2);
        assert_eq!(alpha, vec![1.0, 1.0]);
        assert_eq!(weighted_map(&alpha, &a, 2), vec![4.0, 6.0]);
        assert_eq!(weighted_map(&[1.0, -1.0], &a, 2), vec![-2.0, -2.0]);
    }

    #[test]
    fn zero_fc_to_class_gives_zero_map() {
        let mut net = PdNet::init(8, 1).unwrap();
        let f = net.fc.in_features();
        net.fc.weight.values_mut()[f..].iter_mut().for_each(|w| *w = 0.0);
        let chunk = SpeechChunk {
            samples: (0..8).map(|i| (i as f64 * 0.7).sin()).collect(),
            start_s: 0.0,
            end_s: 1.0,
            words: vec![],
            recording_ref: "r".into(),
            subject_id: "s".into(),
            label: crate::audio::Label::PD,
            index: 0,
        };
        let r = grad_cam(&net, &chunk, 1).unwrap();
        assert!(r.alpha.iter().all(|&a| a == 0.0));
        assert!(r.map.iter().all(|&m| m == 0.0));
        assert_eq!(r.map.len(), 8);
        assert_eq!(r.alpha.len(), 96);
        assert!(matches!(grad_cam(&net, &chunk, 2), Err(GradCamError::InvalidClass { .. })));
    }

    fn res(map: Vec<f64>, class_id: usize) -> GradCamResult {
        GradCamResult {
            alpha: vec![],
            map,
            class_id,
            chunk_ref: String::new(),
        }
    }

    #[test]
    fn class_average_cases() {
        let m = vec![0.5, -1.0, 2.0];
        assert_eq!(class_averaged_map(&[res(m.clone(), 1)], 1).unwrap(), m);
        let neg: Vec<f64> = m.iter().map(|v| -v).collect();
        assert_eq!(class_averaged_map(&[res(m.clone(), 1), res(neg, 1)], 1).unwrap(), vec![0.0; 3]);
        assert_eq!(class_averaged_map(&[], 1), Err(GradCamError::EmptyInput));
        assert_eq!(
            class_averaged_map(&[res(m.clone(), 1), res(m, 0)], 1),
            Err(GradCamError::MixedClasses)
        );
    }
}
