use super::{AudioError, AudioRecording};

fn interpolate(samples: &[f64], step: f64, out_len: usize) -> Vec<f64> {
    let last = samples.len() - 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let lo = pos.floor() as usize;
            if lo >= last {
                return samples[last];
            }
            let frac = pos - lo as f64;
            samples[lo] + (samples[lo + 1] - samples[lo]) * frac
        })
        .collect()
}

/// Linear-interpolation resampling of a raw buffer to exactly `out_len` samples.
///
/// Output sample `i` reads the input at position `i * len / out_len`; positions
/// past the last input sample hold the last value.
pub fn resample_linear(samples: &[f64], out_len: usize) -> Vec<f64> {
    if samples.is_empty() || out_len == 0 {
        return Vec::new();
    }
    interpolate(samples, samples.len() as f64 / out_len as f64, out_len)
}

/// Resample a recording to `target_rate`. Output length is
/// `round(len * target / source)`; equal rates return the input unchanged.
pub fn resample(rec: &AudioRecording, target_rate: u32) -> Result<AudioRecording, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidRate(0));
    }
    if rec.samples.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    if rec.sample_rate == target_rate {
        return Ok(rec.clone());
    }
    let out_len =
        (rec.samples.len() as f64 * target_rate as f64 / rec.sample_rate as f64).round() as usize;
    if out_len == 0 {
        return Err(AudioError::EmptyAudio);
    }
    // step is source/target exactly, independent of the rounded length
    let step = rec.sample_rate as f64 / target_rate as f64;
    Ok(AudioRecording {
        samples: interpolate(&rec.samples, step, out_len),
        sample_rate: target_rate,
        subject_id: rec.subject_id.clone(),
        label: rec.label,
        kind: rec.kind,
        source_path: rec.source_path.clone(),
    })
}
