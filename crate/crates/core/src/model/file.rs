//! `PDN1` model files.
//!
//! Layout (little-endian): magic `PDN1`, `u32` version, `u32` chunk_len,
//! `u64` seed, `f64` BN momentum, `f64` BN epsilon, `u32` provenance length
//! and that many bytes of JSON, `u32` tensor count, one `u64` length per
//! tensor, the `f64` blob, and a trailing CRC32 of everything before it.

use std::fs;
use std::path::Path;

use super::{ModelError, PdNet, Provenance, CLASSES, CONV1_CHANNELS, CONV2_CHANNELS, KERNEL};
use crate::autodiff::{AffineParams, BnParams, ConvParams, Tensor};

pub const MAGIC: &[u8; 4] = b"PDN1";
pub const FORMAT_VERSION: u32 = 1;

fn stored_tensors(net: &PdNet) -> Vec<&[f64]> {
    vec![
        net.conv1.weight.values(),
        net.conv1.bias.values(),
        net.bn1.gamma.values(),
        net.bn1.beta.values(),
        &net.bn1.running_mean,
        &net.bn1.running_var,
        net.conv2.weight.values(),
        net.conv2.bias.values(),
        net.bn2.gamma.values(),
        net.bn2.beta.values(),
        &net.bn2.running_mean,
        &net.bn2.running_var,
        net.fc.weight.values(),
        net.fc.bias.values(),
    ]
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ModelError::CorruptFile("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl PdNet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = stored_tensors(self);
        let meta = serde_json::to_vec(&self.provenance).expect("provenance serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.chunk_len as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.bn1.momentum.to_le_bytes());
        out.extend_from_slice(&self.bn1.epsilon.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in &tensors {
            out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        }
        for t in &tensors {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(ModelError::CorruptFile("missing PDN1 magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(ModelError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 12 {
            return Err(ModelError::CorruptFile("truncated header".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(ModelError::CorruptFile("checksum mismatch".into()));
        }

        let mut r = Reader { bytes: body, pos: 8 };
        let chunk_len = r.u32()? as usize;
        let seed = r.u64()?;
        let momentum = r.f64()?;
        let epsilon = r.f64()?;
        let meta_len = r.u32()? as usize;
        let provenance: Provenance = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| ModelError::CorruptFile(format!("provenance: {e}")))?;
        let count = r.u32()? as usize;
        let mut lens = Vec::with_capacity(count);
        for _ in 0..count {
            lens.push(r.u64()? as usize);
        }

        let mut net = PdNet::init(chunk_len, seed)?;
        let expected: Vec<usize> = stored_tensors(&net).iter().map(|t| t.len()).collect();
        if lens != expected {
            return Err(ModelError::CorruptFile(format!(
                "tensor lengths {lens:?} do not match architecture {expected:?}"
            )));
        }
        let mut blobs = Vec::with_capacity(count);
        for &n in &lens {
            let raw = r.take(n * 8)?;
            blobs.push(
                raw.chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                    .collect::<Vec<f64>>(),
            );
        }
        if r.pos != body.len() {
            return Err(ModelError::CorruptFile("trailing bytes".into()));
        }
        let mut b = blobs.into_iter();
        let mut next = |shape: Vec<usize>| Tensor::new(shape, b.next().expect("count checked"));
        net.conv1 = ConvParams {
            weight: next(vec![CONV1_CHANNELS, 1, KERNEL])?,
            bias: next(vec![CONV1_CHANNELS])?,
            padding: net.conv1.padding,
        };
        net.bn1 = BnParams {
            gamma: next(vec![CONV1_CHANNELS])?,
            beta: next(vec![CONV1_CHANNELS])?,
            running_mean: next(vec![CONV1_CHANNELS])?.into_values(),
            running_var: next(vec![CONV1_CHANNELS])?.into_values(),
            momentum,
            epsilon,
        };
        net.conv2 = ConvParams {
            weight: next(vec![CONV2_CHANNELS, CONV1_CHANNELS, KERNEL])?,
            bias: next(vec![CONV2_CHANNELS])?,
            padding: net.conv2.padding,
        };
        net.bn2 = BnParams {
            gamma: next(vec![CONV2_CHANNELS])?,
            beta: next(vec![CONV2_CHANNELS])?,
            running_mean: next(vec![CONV2_CHANNELS])?.into_values(),
            running_var: next(vec![CONV2_CHANNELS])?.into_values(),
            momentum,
            epsilon,
        };
        net.fc = AffineParams {
            weight: next(vec![CLASSES, CONV2_CHANNELS * chunk_len])?,
            bias: next(vec![CLASSES])?,
        };
        net.provenance = provenance;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes()).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }

    /// Number of `f64`s in a serialized file, read from its header.
    pub fn stored_value_count(bytes: &[u8]) -> Result<usize, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        r.take(4 + 4 + 4 + 8 + 8 + 8)?;
        let meta_len = r.u32()? as usize;
        r.take(meta_len)?;
        let count = r.u32()?;
        let mut total = 0;
        for _ in 0..count {
            total += r.u64()? as usize;
        }
        Ok(total)
    }
}
