use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::{clip, AudioError};

const RIFF: &[u8; 4] = b"RIFF";
const WAVE: &[u8; 4] = b"WAVE";
const FMT: &[u8; 4] = b"fmt ";
const DATA: &[u8; 4] = b"data";

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Pcm16,
    Float32,
}

/// Decoded mono audio plus what the header said about the source.
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channels: u16,
    pub encoding: Encoding,
}

struct Format {
    channels: u16,
    sample_rate: u32,
    encoding: Encoding,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Format, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::MalformedRiff("fmt chunk shorter than 16 bytes".into()));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(AudioError::MalformedRiff("truncated WAVE_FORMAT_EXTENSIBLE".into()));
        }
        // first two bytes of the sub-format GUID carry the real tag
        tag = u16_at(body, 24);
    }
    let encoding = match (tag, bits) {
        (FORMAT_PCM, 16) => Encoding::Pcm16,
        (FORMAT_IEEE_FLOAT, 32) => Encoding::Float32,
        _ => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "format tag {tag} with {bits} bits per sample"
            )))
        }
    };
    if channels == 0 || channels > 2 {
        return Err(AudioError::UnsupportedEncoding(format!("{channels} channels")));
    }
    if sample_rate == 0 {
        return Err(AudioError::MalformedRiff("sample rate 0".into()));
    }
    Ok(Format {
        channels,
        sample_rate,
        encoding,
    })
}

/// Decode a RIFF/WAVE byte buffer (PCM16 or float32, mono or stereo) to mono.
pub fn decode_wav(bytes: &[u8]) -> Result<WavData, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != RIFF || &bytes[8..12] != WAVE {
        return Err(AudioError::MalformedRiff("missing RIFF/WAVE magic".into()));
    }
    let mut fmt = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                AudioError::MalformedRiff(format!(
                    "chunk {:?} claims {size} bytes, only {} left",
                    String::from_utf8_lossy(id),
                    bytes.len() - start
                ))
            })?;
        if id == FMT {
            fmt = Some(parse_fmt(&bytes[start..end])?);
        } else if id == DATA {
            data = Some(&bytes[start..end]);
        }
        // chunks are word aligned
        pos = end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| AudioError::MalformedRiff("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::MalformedRiff("no data chunk".into()))?;

    let width = match fmt.encoding {
        Encoding::Pcm16 => 2,
        Encoding::Float32 => 4,
    };
    let frame = width * fmt.channels as usize;
    let frames = data.len() / frame;
    if frames == 0 {
        return Err(AudioError::EmptyAudio);
    }
    let sample = |i: usize| -> f64 {
        let at = i * width;
        match fmt.encoding {
            Encoding::Pcm16 => i16::from_le_bytes([data[at], data[at + 1]]) as f64 / 32768.0,
            Encoding::Float32 => {
                f32::from_le_bytes([data[at], data[at + 1], data[at + 2], data[at + 3]]) as f64
            }
        }
    };
    let samples = (0..frames)
        .map(|f| {
            let v = if fmt.channels == 2 {
                (sample(2 * f) + sample(2 * f + 1)) / 2.0
            } else {
                sample(f)
            };
            clip(v)
        })
        .collect();
    Ok(WavData {
        samples,
        sample_rate: fmt.sample_rate,
        channels: fmt.channels,
        encoding: fmt.encoding,
    })
}

/// Read a WAV file and mix it down to mono.
pub fn read_wav(path: &Path) -> Result<WavData, AudioError> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => AudioError::MissingFile(path.display().to_string()),
        _ => AudioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        },
    })?;
    decode_wav(&bytes)
}

/// Encode mono samples as 16-bit PCM.
pub fn encode_wav_pcm16(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(RIFF);
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(WAVE);
    out.extend_from_slice(FMT);
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(DATA);
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let q = (clip(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Write mono samples as a 16-bit PCM WAV file.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), AudioError> {
    let io_err = |e: io::Error| AudioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&encode_wav_pcm16(samples, sample_rate))
        .map_err(io_err)
}
