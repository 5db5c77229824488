use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AudioError, Label, RecordingKind};

/// One manifest row. `path` and `timestamps` are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub subject: String,
    pub label: Label,
    pub kind: RecordingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub working_rate: u32,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, working_rate: u32, base_dir: impl Into<PathBuf>) -> Result<Self, AudioError> {
        let m = Self {
            entries,
            working_rate,
            base_dir: base_dir.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if self.working_rate == 0 {
            return Err(AudioError::InvalidRate(0));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.subject.trim().is_empty() {
                return Err(AudioError::Manifest(format!("{}: empty subject", e.path)));
            }
            if !seen.insert(e.path.as_str()) {
                return Err(AudioError::Manifest(format!("duplicate path {}", e.path)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, working_rate: u32, base_dir: impl Into<PathBuf>) -> Result<Self, AudioError> {
        let entries: Vec<ManifestEntry> =
            serde_json::from_str(text).map_err(|e| AudioError::Manifest(e.to_string()))?;
        Self::new(entries, working_rate, base_dir)
    }

    pub fn load(path: &Path, working_rate: u32) -> Result<Self, AudioError> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => AudioError::MissingFile(path.display().to_string()),
            _ => AudioError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            },
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, working_rate, base)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("manifest entries serialize")
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }
}
