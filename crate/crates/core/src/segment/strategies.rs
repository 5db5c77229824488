use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::envelope::{frame_geometry, rms_envelope, EnvelopePoint};
use super::{EnvelopeParams, SegmentError, SpeechChunk, WordTimestamp};
use crate::audio::{resample_linear, AudioError, AudioRecording};

/// Chunking strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Silence,
    Words,
    Hybrid,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "silence" => Ok(Strategy::Silence),
            "words" => Ok(Strategy::Words),
            "hybrid" => Ok(Strategy::Hybrid),
            other => Err(format!("unknown strategy '{other}' (silence|words|hybrid)")),
        }
    }
}

fn sample_span(rec: &AudioRecording, start_s: f64, end_s: f64) -> (usize, usize) {
    let rate = rec.sample_rate as f64;
    let len = rec.samples.len();
    let s = ((start_s * rate).round() as usize).min(len.saturating_sub(1));
    let e = ((end_s * rate).round() as usize).clamp(s + 1, len);
    (s, e)
}

fn make_chunk(rec: &AudioRecording, start_s: f64, end_s: f64, words: Vec<String>, index: usize) -> SpeechChunk {
    let (s, e) = sample_span(rec, start_s, end_s);
    SpeechChunk {
        samples: rec.samples[s..e].to_vec(),
        start_s,
        end_s,
        words,
        recording_ref: rec.source_path.clone(),
        subject_id: rec.subject_id.clone(),
        label: rec.label,
        index,
    }
}

/// Chunks are maximal runs of envelope frames at or above
/// `rel_threshold * peak`, with gaps shorter than `min_silence_s` merged.
pub fn segment_by_silence(rec: &AudioRecording, p: &EnvelopeParams) -> Result<Vec<SpeechChunk>, SegmentError> {
    let env = rms_envelope(rec, p)?;
    let peak = env.iter().map(|e| e.rms).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(SegmentError::NoSpeechDetected);
    }
    let threshold = p.rel_threshold * peak;
    let (_, hop) = frame_geometry(rec.sample_rate, p);
    let hop_s = hop as f64 / rec.sample_rate as f64;
    let duration = rec.duration_s();
    let n = env.len();

    let mut spans: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < n {
        if env[i].rms < threshold {
            i += 1;
            continue;
        }
        let first = i;
        while i + 1 < n && env[i + 1].rms >= threshold {
            i += 1;
        }
        let last = i;
        i += 1;
        // frame centres mark the edges, except where a run touches the recording ends
        let start = if first == 0 { 0.0 } else { env[first].time_s };
        let mut end = if last == n - 1 { duration } else { env[last].time_s };
        if end <= start {
            end = (start + hop_s).min(duration);
        }
        match spans.last_mut() {
            Some(prev) if start - prev.1 < p.min_silence_s => prev.1 = end,
            _ => spans.push((start, end)),
        }
    }
    if spans.is_empty() {
        return Err(SegmentError::NoSpeechDetected);
    }
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(k, (s, e))| make_chunk(rec, s, e, Vec::new(), k))
        .collect())
}

fn check_timestamps(rec: &AudioRecording, ts: &[WordTimestamp], words_per_chunk: usize) -> Result<(), SegmentError> {
    if rec.samples.is_empty() {
        return Err(SegmentError::EmptyAudio);
    }
    if words_per_chunk == 0 {
        return Err(SegmentError::InvalidParameter("words_per_chunk must be >= 1".into()));
    }
    if ts.is_empty() {
        return Err(SegmentError::EmptyTimestamps);
    }
    let duration = rec.duration_s();
    // half a sample of slack for timestamps rounded by the producer
    let slack = 0.5 / rec.sample_rate as f64;
    for (i, t) in ts.iter().enumerate() {
        if !(t.start_s.is_finite() && t.end_s.is_finite()) || t.start_s >= t.end_s {
            return Err(SegmentError::InvalidTimestamps(format!(
                "word {i} '{}' has start {} >= end {}",
                t.word, t.start_s, t.end_s
            )));
        }
        if t.start_s < 0.0 || t.end_s > duration + slack {
            return Err(SegmentError::TimestampOutOfRange {
                index: i,
                start_s: t.start_s,
                end_s: t.end_s,
                duration_s: duration,
            });
        }
        if i > 0 && t.start_s < ts[i - 1].end_s {
            return Err(SegmentError::InvalidTimestamps(format!(
                "word {i} '{}' overlaps or precedes word {}",
                t.word,
                i - 1
            )));
        }
    }
    Ok(())
}

fn word_groups(ts: &[WordTimestamp], words_per_chunk: usize) -> Vec<(f64, f64, Vec<String>)> {
    ts.chunks(words_per_chunk)
        .map(|g| {
            (
                g[0].start_s,
                g[g.len() - 1].end_s,
                g.iter().map(|w| w.word.clone()).collect(),
            )
        })
        .collect()
}

/// Consecutive groups of `words_per_chunk` words; a trailing shorter group still forms a chunk.
pub fn segment_by_words(
    rec: &AudioRecording,
    ts: &[WordTimestamp],
    words_per_chunk: usize,
) -> Result<Vec<SpeechChunk>, SegmentError> {
    check_timestamps(rec, ts, words_per_chunk)?;
    Ok(word_groups(ts, words_per_chunk)
        .into_iter()
        .enumerate()
        .map(|(k, (s, e, w))| make_chunk(rec, s, e, w, k))
        .collect())
}

fn snap(boundary: f64, env: &[EnvelopePoint], tolerance: f64) -> f64 {
    let nearest = env
        .iter()
        .min_by(|a, b| {
            (a.time_s - boundary)
                .abs()
                .total_cmp(&(b.time_s - boundary).abs())
        })
        .expect("envelope is never empty");
    let reference = nearest.rms;
    let mut best: Option<&EnvelopePoint> = None;
    for e in env {
        if (e.time_s - boundary).abs() <= tolerance + 1e-12 && best.map_or(true, |b| e.rms < b.rms) {
            best = Some(e);
        }
    }
    match best {
        Some(b) if b.rms < reference => b.time_s,
        _ => boundary,
    }
}

/// Word groups whose edges are moved to the quietest envelope frame within
/// `snap_tolerance_s`. Snapped edges that would cross a neighbour revert,
/// together with that neighbour, to their unsnapped positions.
pub fn segment_hybrid(
    rec: &AudioRecording,
    ts: &[WordTimestamp],
    words_per_chunk: usize,
    p: &EnvelopeParams,
    snap_tolerance_s: f64,
) -> Result<Vec<SpeechChunk>, SegmentError> {
    check_timestamps(rec, ts, words_per_chunk)?;
    if !(snap_tolerance_s >= 0.0) {
        return Err(SegmentError::InvalidParameter("snap_tolerance_s must be >= 0".into()));
    }
    let env = rms_envelope(rec, p)?;
    let duration = rec.duration_s();
    let groups = word_groups(ts, words_per_chunk);

    // flattened as [start0, end0, start1, end1, ...]
    let original: Vec<f64> = groups.iter().flat_map(|g| [g.0, g.1]).collect();
    let mut snapped: Vec<f64> = original
        .iter()
        .map(|&b| snap(b, &env, snap_tolerance_s).clamp(0.0, duration))
        .collect();
    loop {
        let mut changed = false;
        for j in 0..snapped.len() - 1 {
            // a chunk's own start/end must stay strictly ordered; neighbours may touch
            let crossed = if j % 2 == 0 {
                snapped[j] >= snapped[j + 1]
            } else {
                snapped[j] > snapped[j + 1]
            };
            if crossed {
                snapped[j] = original[j];
                snapped[j + 1] = original[j + 1];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(k, (_, _, w))| make_chunk(rec, snapped[2 * k], snapped[2 * k + 1], w, k))
        .collect())
}

/// Dispatch on strategy. Timestamps are required for `Words` and `Hybrid`.
pub fn segment(
    rec: &AudioRecording,
    strategy: Strategy,
    ts: Option<&[WordTimestamp]>,
    words_per_chunk: usize,
    p: &EnvelopeParams,
    snap_tolerance_s: f64,
) -> Result<Vec<SpeechChunk>, SegmentError> {
    match (strategy, ts) {
        (Strategy::Silence, _) => segment_by_silence(rec, p),
        (Strategy::Words, Some(ts)) => segment_by_words(rec, ts, words_per_chunk),
        (Strategy::Hybrid, Some(ts)) => segment_hybrid(rec, ts, words_per_chunk, p, snap_tolerance_s),
        (_, None) => Err(SegmentError::EmptyTimestamps),
    }
}

/// Bring a chunk to exactly `chunk_len` samples: short chunks are zero padded
/// on both sides, long ones linearly resampled so no word ending is cut off.
pub fn fit_chunk(chunk: &SpeechChunk, chunk_len: usize) -> Result<SpeechChunk, SegmentError> {
    if chunk.samples.is_empty() {
        return Err(SegmentError::EmptyChunk);
    }
    if chunk_len == 0 {
        return Err(SegmentError::InvalidParameter("chunk_len must be >= 1".into()));
    }
    let n = chunk.samples.len();
    let samples = if n == chunk_len {
        chunk.samples.clone()
    } else if n < chunk_len {
        let pad = chunk_len - n;
        let left = pad / 2;
        let mut v = vec![0.0; left];
        v.extend_from_slice(&chunk.samples);
        v.resize(chunk_len, 0.0);
        v
    } else {
        resample_linear(&chunk.samples, chunk_len)
    };
    Ok(SpeechChunk {
        samples,
        ..chunk.clone()
    })
}

fn io_error(path: &Path, e: std::io::Error) -> SegmentError {
    SegmentError::Audio(match e.kind() {
        std::io::ErrorKind::NotFound => AudioError::MissingFile(path.display().to_string()),
        _ => AudioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        },
    })
}

/// Read a timestamp file: a JSON array of `{"word", "start", "end"}`.
pub fn read_timestamps(path: &Path) -> Result<Vec<WordTimestamp>, SegmentError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| SegmentError::InvalidTimestamps(format!("{}: {e}", path.display())))
}

pub fn write_timestamps(path: &Path, ts: &[WordTimestamp]) -> Result<(), SegmentError> {
    let text = serde_json::to_string_pretty(ts).expect("timestamps serialize");
    fs::write(path, text).map_err(|e| io_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{Label, RecordingKind};

    const RATE: u32 = 16000;

    fn rec(samples: Vec<f64>) -> AudioRecording {
        AudioRecording::new(samples, RATE, "s1", Label::PD, RecordingKind::Text, "r.wav").unwrap()
    }

    fn tone(len: usize, amp: f64) -> Vec<f64> {
        (0..len)
            .map(|i| amp * (2.0 * std::f64::consts::PI * 200.0 * i as f64 / RATE as f64).sin())
            .collect()
    }

    fn words(n: usize, dur: f64) -> Vec<WordTimestamp> {
        (0..n)
            .map(|i| WordTimestamp::new(format!("w{i}"), 0.1 + i as f64 * 0.3, 0.1 + i as f64 * 0.3 + 0.2))
            .collect::<Vec<_>>()
            .into_iter()
            .filter(|w| w.end_s <= dur)
            .collect()
    }

    fn assert_ordered(chunks: &[SpeechChunk], duration: f64) {
        for c in chunks {
            assert!(c.end_s > c.start_s);
            assert!(c.start_s >= 0.0 && c.end_s <= duration + 1e-9);
        }
        for w in chunks.windows(2) {
            assert!(w[0].end_s <= w[1].start_s);
        }
    }

    #[test]
    fn silence_all_zero() {
        let r = rec(vec![0.0; 16000]);
        assert_eq!(
            segment_by_silence(&r, &EnvelopeParams::default()),
            Err(SegmentError::NoSpeechDetected)
        );
    }

    #[test]
    fn silence_whole_recording_active() {
        let r = rec(vec![0.3; 16000]);
        let c = segment_by_silence(&r, &EnvelopeParams::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].start_s, 0.0);
        assert_eq!(c[0].end_s, 1.0);
        assert_eq!(c[0].samples.len(), 16000);
        assert!(c[0].words.is_empty());
    }

    #[test]
    fn silence_two_planted_bursts() {
        // bursts at [0.5, 0.8) and [1.8, 2.1), 1 s apart
        let mut x = vec![0.0; 40000];
        let edges = [(0.5, 0.8), (1.8, 2.1)];
        for &(s, e) in &edges {
            let (a, b) = ((s * RATE as f64) as usize, (e * RATE as f64) as usize);
            x[a..b].copy_from_slice(&tone(b - a, 0.6));
        }
        let p = EnvelopeParams::default();
        let c = segment_by_silence(&rec(x), &p).unwrap();
        assert_eq!(c.len(), 2);
        for (chunk, &(s, e)) in c.iter().zip(&edges) {
            assert!((chunk.start_s - s).abs() <= p.hop_s, "{} vs {s}", chunk.start_s);
            assert!((chunk.end_s - e).abs() <= p.hop_s, "{} vs {e}", chunk.end_s);
        }
        assert_ordered(&c, 2.5);
    }

    #[test]
    fn silence_short_gap_merged() {
        let mut x = tone(16000, 0.5);
        for v in &mut x[8000..8800] {
            *v = 0.0; // 50 ms gap < 150 ms
        }
        let c = segment_by_silence(&rec(x), &EnvelopeParams::default()).unwrap();
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn words_single_group() {
        let r = rec(tone(32000, 0.5));
        let c = segment_by_words(&r, &words(4, 2.0), 4).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].words, vec!["w0", "w1", "w2", "w3"]);
    }

    #[test]
    fn words_grouping_arithmetic() {
        let r = rec(tone(32000, 0.5));
        let ts = words(5, 2.0);
        let c = segment_by_words(&r, &ts, 2).unwrap();
        let counts: Vec<usize> = c.iter().map(|c| c.words.len()).collect();
        assert_eq!(counts, vec![2, 2, 1]);
        assert_eq!(c[1].start_s, ts[2].start_s);
        assert_eq!(c[1].end_s, ts[3].end_s);
        assert_ordered(&c, 2.0);
        // words_per_chunk at least the word count gives a single chunk
        assert_eq!(segment_by_words(&r, &ts, 99).unwrap().len(), 1);
    }

    #[test]
    fn words_out_of_range() {
        let r = rec(tone(16000, 0.5));
        let ts = vec![WordTimestamp::new("a", 0.5, 1.2)];
        assert!(matches!(
            segment_by_words(&r, &ts, 1),
            Err(SegmentError::TimestampOutOfRange { .. })
        ));
        assert_eq!(segment_by_words(&r, &[], 1), Err(SegmentError::EmptyTimestamps));
        let overlapping = vec![WordTimestamp::new("a", 0.1, 0.5), WordTimestamp::new("b", 0.4, 0.6)];
        assert!(matches!(
            segment_by_words(&r, &overlapping, 1),
            Err(SegmentError::InvalidTimestamps(_))
        ));
    }

    #[test]
    fn hybrid_constant_envelope_is_words() {
        let r = rec(vec![0.4; 32000]);
        let ts = words(5, 2.0);
        let p = EnvelopeParams::default();
        assert_eq!(
            segment_hybrid(&r, &ts, 2, &p, 0.05).unwrap(),
            segment_by_words(&r, &ts, 2).unwrap()
        );
    }

    #[test]
    fn hybrid_zero_tolerance_is_words() {
        let r = rec(tone(32000, 0.5));
        let ts = words(6, 2.0);
        let p = EnvelopeParams::default();
        assert_eq!(
            segment_hybrid(&r, &ts, 1, &p, 0.0).unwrap(),
            segment_by_words(&r, &ts, 1).unwrap()
        );
    }

    #[test]
    fn hybrid_snaps_to_planted_minimum() {
        // loud everywhere except a quiet notch centred at 0.492 s
        let mut x = tone(16000, 0.8);
        let centre = (0.492 * RATE as f64) as usize;
        for v in &mut x[centre - 80..centre + 80] {
            *v *= 0.01;
        }
        let r = rec(x);
        let ts = vec![WordTimestamp::new("a", 0.1, 0.5), WordTimestamp::new("b", 0.6, 0.9)];
        let p = EnvelopeParams::default();
        let env = rms_envelope(&r, &p).unwrap();
        // oracle: argmin of the envelope within +-50 ms of 0.5
        let oracle = env
            .iter()
            .filter(|e| (e.time_s - 0.5).abs() <= 0.05)
            .min_by(|a, b| a.rms.total_cmp(&b.rms))
            .unwrap()
            .time_s;
        let c = segment_hybrid(&r, &ts, 1, &p, 0.05).unwrap();
        assert_eq!(c[0].end_s, oracle);
        assert!((c[0].end_s - 0.492).abs() <= p.hop_s);
        assert_ordered(&c, 1.0);
    }

    #[test]
    fn hybrid_collapsed_chunk_reverts() {
        // a 30 ms word with a quiet notch inside it: start and end would both
        // snap onto the notch and collapse the chunk, so both revert
        let mut x = tone(16000, 0.8);
        let q = (0.415 * RATE as f64) as usize;
        for v in &mut x[q - 120..q + 120] {
            *v = 0.0;
        }
        let r = rec(x);
        let ts = vec![WordTimestamp::new("a", 0.40, 0.43), WordTimestamp::new("b", 0.6, 0.9)];
        let p = EnvelopeParams::default();
        let c = segment_hybrid(&r, &ts, 1, &p, 0.05).unwrap();
        assert_eq!((c[0].start_s, c[0].end_s), (0.40, 0.43));
        assert_ordered(&c, 1.0);
        for (chunk, w) in c.iter().zip(&ts) {
            assert!((chunk.start_s - w.start_s).abs() <= 0.05 + 1e-12);
            assert!((chunk.end_s - w.end_s).abs() <= 0.05 + 1e-12);
        }
    }

    #[test]
    fn fit_identity() {
        let r = rec(tone(1024, 0.5));
        let c = segment_by_words(&r, &[WordTimestamp::new("a", 0.0, 1024.0 / 16000.0)], 1).unwrap();
        assert_eq!(c[0].samples.len(), 1024);
        assert_eq!(fit_chunk(&c[0], 1024).unwrap(), c[0]);
    }

    #[test]
    fn fit_pads_symmetrically() {
        let chunk = SpeechChunk {
            samples: vec![1.0; 512],
            start_s: 0.0,
            end_s: 1.0,
            words: vec![],
            recording_ref: "r".into(),
            subject_id: "s".into(),
            label: Label::HC,
            index: 0,
        };
        let f = fit_chunk(&chunk, 1024).unwrap();
        assert_eq!(f.samples.len(), 1024);
        assert!(f.samples[..256].iter().all(|&v| v == 0.0));
        assert!(f.samples[256..768].iter().all(|&v| v == 1.0));
        assert!(f.samples[768..].iter().all(|&v| v == 0.0));
        let empty = SpeechChunk {
            samples: vec![],
            ..chunk
        };
        assert_eq!(fit_chunk(&empty, 8), Err(SegmentError::EmptyChunk));
    }
}
