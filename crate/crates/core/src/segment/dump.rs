//! Chunk dump: a JSON-lines index next to a raw little-endian float32 blob.
//!
//! The first line is a [`ChunkDumpHeader`]; every further line describes one
//! chunk and points at its samples by offset and length (in samples) inside
//! the sibling `.f32` file.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SegmentError, SpeechChunk};
use crate::audio::Label;

pub const CHUNK_DUMP_FORMAT: &str = "pdcam-chunks";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkDumpHeader {
    pub format: String,
    pub version: u32,
    pub sample_rate: u32,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl ChunkDumpHeader {
    pub fn new(sample_rate: u32, config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            format: CHUNK_DUMP_FORMAT.into(),
            version: 1,
            sample_rate,
            config_hash: config_hash.into(),
            seed,
            tool_version: crate::TOOL_VERSION.into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChunkLine {
    recording: String,
    subject: String,
    label: Label,
    index: usize,
    start: f64,
    end: f64,
    words: Vec<String>,
    samples_file: String,
    offset: u64,
    len: u64,
}

fn dump_err(path: &Path, e: impl std::fmt::Display) -> SegmentError {
    SegmentError::Dump(format!("{}: {e}", path.display()))
}

/// Write `chunks` to `index_path` (JSON lines) and its `.f32` sibling.
pub fn write_chunk_dump(index_path: &Path, header: &ChunkDumpHeader, chunks: &[SpeechChunk]) -> Result<(), SegmentError> {
    let blob_path = index_path.with_extension("f32");
    let blob_name = blob_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| dump_err(index_path, "index path has no file name"))?
        .to_string();

    let mut index = BufWriter::new(fs::File::create(index_path).map_err(|e| dump_err(index_path, e))?);
    let mut blob = BufWriter::new(fs::File::create(&blob_path).map_err(|e| dump_err(&blob_path, e))?);

    let head = serde_json::to_string(header).map_err(|e| dump_err(index_path, e))?;
    writeln!(index, "{head}").map_err(|e| dump_err(index_path, e))?;
    let mut offset = 0u64;
    for c in chunks {
        let line = ChunkLine {
            recording: c.recording_ref.clone(),
            subject: c.subject_id.clone(),
            label: c.label,
            index: c.index,
            start: c.start_s,
            end: c.end_s,
            words: c.words.clone(),
            samples_file: blob_name.clone(),
            offset,
            len: c.samples.len() as u64,
        };
        let text = serde_json::to_string(&line).map_err(|e| dump_err(index_path, e))?;
        writeln!(index, "{text}").map_err(|e| dump_err(index_path, e))?;
        for &s in &c.samples {
            blob.write_all(&(s as f32).to_le_bytes())
                .map_err(|e| dump_err(&blob_path, e))?;
        }
        offset += c.samples.len() as u64;
    }
    index.flush().map_err(|e| dump_err(index_path, e))?;
    blob.flush().map_err(|e| dump_err(&blob_path, e))?;
    Ok(())
}

/// Read a chunk dump written by [`write_chunk_dump`].
pub fn read_chunk_dump(index_path: &Path) -> Result<(ChunkDumpHeader, Vec<SpeechChunk>), SegmentError> {
    let file = fs::File::open(index_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SegmentError::Audio(crate::audio::AudioError::MissingFile(
            index_path.display().to_string(),
        )),
        _ => dump_err(index_path, e),
    })?;
    let mut lines = BufReader::new(file).lines();
    let head = lines
        .next()
        .ok_or_else(|| dump_err(index_path, "empty index"))?
        .map_err(|e| dump_err(index_path, e))?;
    let header: ChunkDumpHeader = serde_json::from_str(&head).map_err(|e| dump_err(index_path, e))?;
    if header.format != CHUNK_DUMP_FORMAT || header.version != 1 {
        return Err(dump_err(index_path, "not a version 1 chunk dump"));
    }
    let dir = index_path.parent().unwrap_or_else(|| Path::new("."));
    let mut blob_cache: Option<(String, Vec<u8>)> = None;
    let mut chunks = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| dump_err(index_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let c: ChunkLine =
            serde_json::from_str(&line).map_err(|e| dump_err(index_path, format!("line {}: {e}", n + 2)))?;
        if blob_cache.as_ref().map_or(true, |(name, _)| *name != c.samples_file) {
            let p = dir.join(&c.samples_file);
            let bytes = fs::read(&p).map_err(|e| dump_err(&p, e))?;
            blob_cache = Some((c.samples_file.clone(), bytes));
        }
        let bytes = &blob_cache.as_ref().expect("blob loaded").1;
        let start = (c.offset * 4) as usize;
        let end = start + (c.len * 4) as usize;
        if end > bytes.len() {
            return Err(dump_err(index_path, format!("line {}: samples past end of blob", n + 2)));
        }
        let samples = bytes[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        chunks.push(SpeechChunk {
            samples,
            start_s: c.start,
            end_s: c.end,
            words: c.words,
            recording_ref: c.recording,
            subject_id: c.subject,
            label: c.label,
            index: c.index,
        });
    }
    Ok((header, chunks))
}
