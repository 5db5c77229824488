//! Seeded synthetic corpus: harmonic "words" separated by silence, with a
//! tremor-like amplitude modulation and broadband bursts planted in the PD
//! class at known word positions.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{write_wav, AudioError, DatasetManifest, Label, ManifestEntry, RecordingKind};
use crate::segment::{write_timestamps, SegmentError, WordTimestamp};
use crate::util::rng_for;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// The text every synthetic speaker reads, cycled if more words are needed.
pub const TEXT: [&str; 10] = [
    "casa", "pane", "sole", "mare", "vino", "tetto", "sasso", "fiore", "dado", "zucca",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Subjects per class.
    pub n_subjects: usize,
    pub recordings_per_subject: usize,
    pub words_per_recording: usize,
    pub word_dur_s: f64,
    pub gap_dur_s: f64,
    pub f0_hc: f64,
    pub f0_pd: f64,
    /// Per-subject f0 offsets are uniform in `±f0_spread`.
    pub f0_spread: f64,
    pub tremor_hz: f64,
    pub tremor_depth: f64,
    /// Words per PD recording carrying a broadband burst.
    pub bursts_per_recording: usize,
    pub burst_amplitude: f64,
    pub timestamp_jitter_s: f64,
    pub noise_floor: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 10,
            recordings_per_subject: 2,
            words_per_recording: 10,
            word_dur_s: 0.25,
            gap_dur_s: 0.15,
            f0_hc: 150.0,
            f0_pd: 150.0,
            f0_spread: 25.0,
            tremor_hz: 5.0,
            tremor_depth: 0.5,
            bursts_per_recording: 2,
            burst_amplitude: 1.0,
            timestamp_jitter_s: 0.01,
            noise_floor: 0.002,
            sample_rate: 8_000,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Same corpus shape with no class difference at all.
    pub fn null_control(&self) -> Self {
        Self {
            tremor_depth: 0.0,
            bursts_per_recording: 0,
            f0_pd: self.f0_hc,
            ..self.clone()
        }
    }

    /// Parse JSON, or TOML when the path ends in `.toml`.
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let parsed: Result<Self, String> = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| SynthError::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        if self.n_subjects == 0 || self.recordings_per_subject == 0 || self.words_per_recording == 0 {
            return bad("subject, recording and word counts must be positive");
        }
        for (name, v) in [
            ("word_dur_s", self.word_dur_s),
            ("gap_dur_s", self.gap_dur_s),
            ("f0_hc", self.f0_hc),
            ("f0_pd", self.f0_pd),
            ("tremor_hz", self.tremor_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.tremor_depth) {
            return bad("tremor_depth must lie in [0, 1]");
        }
        if self.bursts_per_recording > self.words_per_recording {
            return bad("more bursts than words");
        }
        if !(self.f0_spread >= 0.0 && self.f0_spread < self.f0_hc.min(self.f0_pd)) {
            return bad("f0_spread must be in [0, min f0)");
        }
        for (name, v) in [
            ("burst_amplitude", self.burst_amplitude),
            ("timestamp_jitter_s", self.timestamp_jitter_s),
            ("noise_floor", self.noise_floor),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be non-negative"));
            }
        }
        if self.sample_rate < 1000 {
            return bad("sample_rate must be at least 1000 Hz");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub entry: ManifestEntry,
    pub samples: Vec<f64>,
    pub timestamps: Vec<WordTimestamp>,
    /// Word (equivalently, single-word chunk) indices carrying a burst.
    pub burst_words: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub recordings: Vec<SynthRecording>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    /// Recording path to burst chunk indices under one word per chunk.
    pub burst_chunks: BTreeMap<String, Vec<usize>>,
}

impl SynthCorpus {
    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            config: self.config.clone(),
            burst_chunks: self
                .recordings
                .iter()
                .map(|r| (r.entry.path.clone(), r.burst_words.clone()))
                .collect(),
        }
    }

    /// Write `manifest.json`, `ground_truth.json`, `audio/*.wav` and
    /// `timestamps/*.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest, SynthError> {
        let io = |p: &Path, e: std::io::Error| SynthError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        };
        for sub in ["audio", "timestamps"] {
            let d = dir.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| io(&d, e))?;
        }
        for r in &self.recordings {
            write_wav(&dir.join(&r.entry.path), &r.samples, self.config.sample_rate)?;
            if let Some(ts) = &r.entry.timestamps {
                write_timestamps(&dir.join(ts), &r.timestamps)?;
            }
        }
        let manifest = DatasetManifest::new(
            self.recordings.iter().map(|r| r.entry.clone()).collect(),
            self.config.sample_rate,
            dir,
        )?;
        let mp = dir.join("manifest.json");
        std::fs::write(&mp, manifest.to_json()).map_err(|e| io(&mp, e))?;
        let gp = dir.join("ground_truth.json");
        let gt = serde_json::to_string_pretty(&self.ground_truth()).expect("ground truth serializes");
        std::fs::write(&gp, gt).map_err(|e| io(&gp, e))?;
        Ok(manifest)
    }
}

/// Tremor gain at time `t` seconds after word onset, scaled to unit mean
/// power so the modulation changes the envelope shape but not the loudness.
pub fn tremor_gain(t: f64, hz: f64, depth: f64) -> f64 {
    let (a, b) = (1.0 - 0.5 * depth, 0.5 * depth);
    (a + b * (2.0 * PI * hz * t).cos()) / (a * a + 0.5 * b * b).sqrt()
}

/// Raised-cosine ramp over the first and last `ramp` samples of `n`.
fn edge_window(i: usize, n: usize, ramp: usize) -> f64 {
    let d = i.min(n - 1 - i);
    if d >= ramp {
        1.0
    } else {
        0.5 * (1.0 - (PI * d as f64 / ramp as f64).cos())
    }
}

struct Voice {
    f0: f64,
    gain: f64,
}

fn render_word(
    cfg: &SynthConfig,
    voice: &Voice,
    label: Label,
    burst: bool,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let sr = cfg.sample_rate as f64;
    let n = (cfg.word_dur_s * sr).round().max(2.0) as usize;
    let ramp = ((0.02 * sr) as usize).clamp(1, n / 2);
    let f0 = voice.f0 * rng.gen_range(0.95..1.05);
    let phases: [f64; 3] = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
    let depth = if label == Label::PD { cfg.tremor_depth } else { 0.0 };
    let (b0, b1) = (n * 3 / 10, n * 7 / 10);
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let tone: f64 = [1.0, 0.5, 0.25]
                .iter()
                .enumerate()
                .map(|(h, a)| a * (2.0 * PI * f0 * (h + 1) as f64 * t + phases[h]).sin())
                .sum::<f64>()
                / 1.75;
            let mut v = voice.gain * tone * tremor_gain(t, cfg.tremor_hz, depth) * edge_window(i, n, ramp);
            if burst && (b0..b1).contains(&i) {
                v += cfg.burst_amplitude * edge_window(i - b0, b1 - b0, ramp) * rng.gen_range(-1.0..1.0);
            }
            v
        })
        .collect()
}

fn jitter(ts: &mut [WordTimestamp], amount: f64, duration: f64, rng: &mut impl Rng) {
    if amount == 0.0 {
        return;
    }
    let mut prev_end = 0.0;
    for w in ts.iter_mut() {
        let len = w.end_s - w.start_s;
        let s = (w.start_s + rng.gen_range(-amount..=amount)).max(prev_end);
        let e = (w.end_s + rng.gen_range(-amount..=amount)).clamp(s + 0.5 * len, duration);
        w.start_s = s;
        w.end_s = e;
        prev_end = e;
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let sr = cfg.sample_rate as f64;
    let lead = (0.2 * sr) as usize;
    let gap = (cfg.gap_dur_s * sr).round() as usize;
    let mut recordings = Vec::new();
    for (ci, label) in [Label::HC, Label::PD].into_iter().enumerate() {
        for s in 0..cfg.n_subjects {
            let subject = format!("{}{:02}", label.to_string().to_lowercase(), s + 1);
            let mut srng = rng_for(cfg.seed, 0x100_0000 + (ci * 10_000 + s) as u64);
            let base = if label == Label::PD { cfg.f0_pd } else { cfg.f0_hc };
            let voice = Voice {
                f0: base + srng.gen_range(-1.0..=1.0) * cfg.f0_spread,
                gain: srng.gen_range(0.3..0.6),
            };
            for r in 0..cfg.recordings_per_subject {
                let id = format!("{subject}_r{}", r + 1);
                let mut rng = rng_for(cfg.seed, 0x200_0000 + ((ci * 10_000 + s) * 100 + r) as u64);
                let mut burst_words = if label == Label::PD && cfg.bursts_per_recording > 0 {
                    sample(&mut rng, cfg.words_per_recording, cfg.bursts_per_recording).into_vec()
                } else {
                    Vec::new()
                };
                burst_words.sort_unstable();

                let mut samples = vec![0.0; lead];
                let mut ts = Vec::with_capacity(cfg.words_per_recording);
                for w in 0..cfg.words_per_recording {
                    let word = render_word(cfg, &voice, label, burst_words.contains(&w), &mut rng);
                    let start = samples.len() as f64 / sr;
                    samples.extend_from_slice(&word);
                    ts.push(WordTimestamp::new(TEXT[w % TEXT.len()], start, samples.len() as f64 / sr));
                    samples.extend(std::iter::repeat(0.0).take(if w + 1 < cfg.words_per_recording { gap } else { lead }));
                }
                for v in samples.iter_mut() {
                    *v = (*v + cfg.noise_floor * rng.gen_range(-1.0..1.0)).clamp(-1.0, 1.0);
                }
                let duration = samples.len() as f64 / sr;
                jitter(&mut ts, cfg.timestamp_jitter_s, duration, &mut rng);
                recordings.push(SynthRecording {
                    entry: ManifestEntry {
                        path: format!("audio/{id}.wav"),
                        subject: subject.clone(),
                        label,
                        kind: RecordingKind::Text,
                        timestamps: Some(format!("timestamps/{id}.json")),
                    },
                    samples,
                    timestamps: ts,
                    burst_words,
                });
            }
        }
    }
    Ok(SynthCorpus {
        config: cfg.clone(),
        recordings,
    })
}
