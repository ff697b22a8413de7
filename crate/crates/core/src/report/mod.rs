//! Deterministic emission of tables (CSV + JSON) and figures (SVG) into a
//! run directory, tracked by a manifest.
//!
//! Layout of a run directory:
//!
//! ```text
//! <out>/
//!   manifest.json
//!   tables/    consistency + per-difference similarity tables
//!   figures/   PCA scatter and heatmap SVGs
//!   cache/     embedding store
//! ```
//!
//! All artifacts are byte-stable across runs given identical inputs and
//! config: iteration orders are sorted, floats are formatted with fixed
//! precision, and writes are atomic (temp file + rename).

mod color;
mod manifest;
mod svg;
mod tables;

pub use color::ColorRamp;
pub use manifest::{ArtifactEntry, InputDigest, RunManifest};
pub use svg::{render_heatmap, render_pca_scatter};
pub use tables::{consistency_table, similarity_tables, TableArtifact};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ioutil::{atomic_write, sha256_hex};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("at least 2 points are required to render a scatter figure, got {0}")]
    InsufficientPoints(usize),
    #[error("heatmap shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown rater {rater_id:?}")]
    UnknownRater { rater_id: String },
}

/// Render "--" for undefined table cells.
pub const UNDEFINED_CELL: &str = "--";

/// Fixed-precision cell formatting; Rust's float formatting rounds to
/// nearest with ties to even.
pub fn fmt_fixed(value: f64, places: usize) -> String {
    format!("{value:.places$}")
}

/// A run directory handle that registers every artifact it writes.
pub struct RunDirectory {
    root: PathBuf,
    written: Vec<ArtifactEntry>,
}

impl RunDirectory {
    pub fn create(root: &Path) -> Result<Self, ReportError> {
        for sub in ["tables", "figures", "cache"] {
            std::fs::create_dir_all(root.join(sub)).map_err(|source| ReportError::Io {
                path: root.join(sub),
                source,
            })?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cache_path(&self) -> PathBuf {
        self.root.join("cache/embeddings.jsonl")
    }

    /// Atomically write an artifact at a run-relative path and register its
    /// digest.
    pub fn write_artifact(&mut self, rel_path: &str, bytes: &[u8]) -> Result<(), ReportError> {
        let path = self.root.join(rel_path);
        atomic_write(&path, bytes).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(ArtifactEntry {
            path: rel_path.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Artifacts written so far (registration order).
    pub fn artifacts(&self) -> &[ArtifactEntry] {
        &self.written
    }
}
