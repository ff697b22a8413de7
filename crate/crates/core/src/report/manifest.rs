//! Run manifest: config snapshot, input digests, and produced artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::ioutil::atomic_write;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to audit or re-run an analysis, minus remote provider
/// responses (those live in the cache).
///
/// `run_id` is derived from the config snapshot and input digests, so two
/// identical runs share an id; the timestamps are the only fields that
/// differ between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub created_at: String,
    pub finished_at: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub artifacts: Vec<ArtifactEntry>,
    /// Flags for undefined metrics, skipped figures, and similar events.
    pub notes: Vec<String>,
    /// True when a stage failed and artifacts are partial.
    pub incomplete: bool,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<(), ReportError> {
        let mut body = serde_json::to_string_pretty(self).expect("manifest serializes");
        body.push('\n');
        atomic_write(path, body.as_bytes()).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let content = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&content).map_err(|e| ReportError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }
}
