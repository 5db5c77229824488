use serde::{Deserialize, Serialize};

use super::{EnvelopeParams, SegmentError};
use crate::audio::AudioRecording;

/// RMS of one analysis window, stamped at the window centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub time_s: f64,
    pub rms: f64,
}

pub(crate) fn frame_geometry(rate: u32, p: &EnvelopeParams) -> (usize, usize) {
    let window = ((p.window_s * rate as f64).round() as usize).max(1);
    let hop = ((p.hop_s * rate as f64).round() as usize).max(1);
    (window, hop)
}

/// Sliding-window RMS. Produces `floor((len - window) / hop) + 1` frames, at
/// least one; a signal shorter than the window yields a single frame over all of it.
pub fn rms_envelope(rec: &AudioRecording, p: &EnvelopeParams) -> Result<Vec<EnvelopePoint>, SegmentError> {
    if rec.samples.is_empty() {
        return Err(SegmentError::EmptyAudio);
    }
    p.validate()?;
    let rate = rec.sample_rate as f64;
    let (window, hop) = frame_geometry(rec.sample_rate, p);
    let x = &rec.samples;
    if x.len() <= window {
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        return Ok(vec![EnvelopePoint {
            time_s: x.len() as f64 / 2.0 / rate,
            rms,
        }]);
    }
    let frames = (x.len() - window) / hop + 1;
    Ok((0..frames)
        .map(|i| {
            let s = i * hop;
            let energy: f64 = x[s..s + window].iter().map(|v| v * v).sum();
            EnvelopePoint {
                time_s: (s as f64 + window as f64 / 2.0) / rate,
                rms: (energy / window as f64).sqrt(),
            }
        })
        .collect())
}
