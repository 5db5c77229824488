//! Handcrafted-feature KNN baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::Label;
use crate::segment::SpeechChunk;

#[derive(Debug, Error, PartialEq)]
pub enum KnnError {
    #[error("chunk has no samples")]
    EmptyChunk,
    #[error("no training points")]
    EmptyTrainingSet,
    #[error("k must be odd, got {0}")]
    EvenK(usize),
    #[error("k = {k} exceeds the {n} training points")]
    KTooLarge { k: usize, n: usize },
}

/// Lowest and highest pitch searched by the autocorrelation estimate.
const PITCH_MIN_HZ: f64 = 60.0;
const PITCH_MAX_HZ: f64 = 400.0;
/// Normalized autocorrelation below this counts as unvoiced.
const VOICING_THRESHOLD: f64 = 0.3;
const ENERGY_WINDOWS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub rms_energy: f64,
    /// Sign changes per sample, counted circularly.
    pub zero_crossing_rate: f64,
    /// Period in samples, 0 when unvoiced.
    pub autocorr_pitch: f64,
    /// Standard deviation of RMS over equal sub-windows.
    pub energy_std: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; 4] {
        [self.rms_energy, self.zero_crossing_rate, self.autocorr_pitch, self.energy_std]
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn autocorr_period(x: &[f64], sample_rate: u32) -> f64 {
    let n = x.len();
    let r0: f64 = x.iter().map(|v| v * v).sum();
    if r0 == 0.0 {
        return 0.0;
    }
    let lo = ((sample_rate as f64 / PITCH_MAX_HZ).floor() as usize).max(1);
    let hi = ((sample_rate as f64 / PITCH_MIN_HZ).ceil() as usize).min(n.saturating_sub(1));
    let mut best = (0usize, f64::NEG_INFINITY);
    for lag in lo..=hi {
        let r: f64 = x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum();
        if r > best.1 {
            best = (lag, r);
        }
    }
    if best.1 / r0 < VOICING_THRESHOLD {
        0.0
    } else {
        best.0 as f64
    }
}

pub fn extract_features(samples: &[f64], sample_rate: u32) -> Result<FeatureVector, KnnError> {
    let n = samples.len();
    if n == 0 {
        return Err(KnnError::EmptyChunk);
    }
    let crossings = (0..n)
        .filter(|&i| (samples[i] >= 0.0) != (samples[(i + 1) % n] >= 0.0))
        .count();
    let windows = ENERGY_WINDOWS.min(n);
    let energies: Vec<f64> = (0..windows)
        .map(|w| rms(&samples[w * n / windows..(w + 1) * n / windows]))
        .collect();
    let mean = crate::util::mean(&energies);
    let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / windows as f64;
    Ok(FeatureVector {
        rms_energy: rms(samples),
        zero_crossing_rate: crossings as f64 / n as f64,
        autocorr_pitch: autocorr_period(samples, sample_rate),
        energy_std: var.sqrt(),
    })
}

/// Per-feature z-scoring fitted on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl Standardizer {
    pub fn fit(features: &[FeatureVector]) -> Result<Self, KnnError> {
        if features.is_empty() {
            return Err(KnnError::EmptyTrainingSet);
        }
        let n = features.len() as f64;
        let mut mean = [0.0; 4];
        let mut std = [0.0; 4];
        for f in features {
            mean.iter_mut().zip(f.to_array()).for_each(|(m, v)| *m += v / n);
        }
        for f in features {
            std.iter_mut()
                .zip(f.to_array())
                .zip(mean)
                .for_each(|((s, v), m)| *s += (v - m).powi(2) / n);
        }
        std.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
        Ok(Self { mean, std })
    }

    pub fn apply(&self, f: &FeatureVector) -> Vec<f64> {
        f.to_array()
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Majority label among the `k` nearest training points (Euclidean; equal
/// distances keep training order).
pub fn knn_classify(train: &[(Vec<f64>, Label)], query: &[f64], k: usize) -> Result<Label, KnnError> {
    if train.is_empty() {
        return Err(KnnError::EmptyTrainingSet);
    }
    if k % 2 == 0 {
        return Err(KnnError::EvenK(k));
    }
    if k > train.len() {
        return Err(KnnError::KTooLarge { k, n: train.len() });
    }
    let mut order: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, (x, _))| (x.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pd = order[..k].iter().filter(|(_, i)| train[*i].1 == Label::PD).count();
    Ok(if 2 * pd > k { Label::PD } else { Label::HC })
}

/// Fitted baseline: standardizer plus standardized training set.
#[derive(Debug, Clone)]
pub struct KnnBaseline {
    pub standardizer: Standardizer,
    pub train: Vec<(Vec<f64>, Label)>,
    pub k: usize,
    pub sample_rate: u32,
}

pub const DEFAULT_K: usize = 5;

impl KnnBaseline {
    pub fn fit(chunks: &[&SpeechChunk], sample_rate: u32, k: usize) -> Result<Self, KnnError> {
        let feats = chunks
            .iter()
            .map(|c| extract_features(&c.samples, sample_rate))
            .collect::<Result<Vec<_>, _>>()?;
        let standardizer = Standardizer::fit(&feats)?;
        let train: Vec<(Vec<f64>, Label)> = feats
            .iter()
            .zip(chunks)
            .map(|(f, c)| (standardizer.apply(f), c.label))
            .collect();
        if k > train.len() {
            return Err(KnnError::KTooLarge { k, n: train.len() });
        }
        Ok(Self {
            standardizer,
            train,
            k,
            sample_rate,
        })
    }

    pub fn predict(&self, chunks: &[&SpeechChunk]) -> Result<Vec<Label>, KnnError> {
        chunks
            .iter()
            .map(|c| {
                let f = extract_features(&c.samples, self.sample_rate)?;
                knn_classify(&self.train, &self.standardizer.apply(&f), self.k)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_signal() {
        let f = extract_features(&[0.0; 256], 16_000).unwrap();
        assert_eq!((f.rms_energy, f.zero_crossing_rate, f.autocorr_pitch), (0.0, 0.0, 0.0));
        assert_eq!(extract_features(&[], 16_000), Err(KnnError::EmptyChunk));
    }

    #[test]
    fn alternating_signal() {
        let x: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let f = extract_features(&x, 16_000).unwrap();
        assert!((f.zero_crossing_rate - 1.0).abs() < 1e-12);
        assert!((f.rms_energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_wave_period() {
        // independent oracle: the period of a 100 Hz square at 16 kHz is 16000/100
        let x: Vec<f64> = (0..1600).map(|i| if (i / 80) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let f = extract_features(&x, 16_000).unwrap();
        assert!((f.autocorr_pitch - 160.0).abs() <= 1.0, "{}", f.autocorr_pitch);
    }

    #[test]
    fn circular_shift_invariance() {
        let x: Vec<f64> = (0..300).map(|i| ((i * i) as f64 * 0.013).sin() * 0.7).collect();
        let f = extract_features(&x, 16_000).unwrap();
        for s in [1, 17, 150, 299] {
            let mut y = x.clone();
            y.rotate_left(s);
            let g = extract_features(&y, 16_000).unwrap();
            assert!((f.rms_energy - g.rms_energy).abs() < 1e-9);
            assert!((f.zero_crossing_rate - g.zero_crossing_rate).abs() < 1e-9);
        }
    }

    #[test]
    fn knn_examples() {
        let train = vec![
            (vec![0.0, 0.0], Label::PD),
            (vec![0.1, 0.0], Label::PD),
            (vec![0.0, 0.2], Label::HC),
            (vec![5.0, 5.0], Label::HC),
        ];
        assert_eq!(knn_classify(&train, &[5.0, 5.0], 1).unwrap(), Label::HC);
        assert_eq!(knn_classify(&train, &[0.0, 0.05], 3).unwrap(), Label::PD);
        assert_eq!(knn_classify(&train, &[0.0, 0.0], 2), Err(KnnError::EvenK(2)));
        assert_eq!(knn_classify(&train, &[0.0, 0.0], 5), Err(KnnError::KTooLarge { k: 5, n: 4 }));
        assert_eq!(knn_classify(&[], &[0.0], 1), Err(KnnError::EmptyTrainingSet));
    }

    #[test]
    fn standardizer_uses_training_statistics() {
        let fv = |v: f64| FeatureVector {
            rms_energy: v,
            zero_crossing_rate: 0.5,
            autocorr_pitch: 2.0 * v,
            energy_std: 0.0,
        };
        let s = Standardizer::fit(&[fv(1.0), fv(3.0)]).unwrap();
        assert_eq!(s.apply(&fv(2.0)), vec![0.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.apply(&fv(3.0)), vec![1.0, 0.0, 1.0, 0.0]);
    }
}
