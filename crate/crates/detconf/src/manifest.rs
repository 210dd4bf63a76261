//! The JSON dataset manifest: one entry per image with its dimensions,
//! one or more probability-map paths (N for dropout ensembles) and an
//! optional ground-truth polygon file.
//!
//! ```json
//! {
//!   "entries": [
//!     {
//!       "image_id": "page-0001",
//!       "height": 64,
//!       "width": 64,
//!       "prob_maps": ["maps/page-0001.pmap"],
//!       "ground_truth": "gt/page-0001.json"
//!     }
//!   ]
//! }
//! ```
//!
//! Paths are resolved relative to the manifest file. Validation is total:
//! every problem in the file is reported in one error before any
//! computation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub prob_maps: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub entries: Vec<ManifestEntry>,
}

/// A loaded and validated manifest; `base_dir` anchors its relative paths.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest {path} is not valid JSON: {message}")]
    Json { path: PathBuf, message: String },
    #[error("manifest {path} is invalid:\n{}", problems.join("\n"))]
    Invalid {
        path: PathBuf,
        problems: Vec<String>,
    },
}

/// Image ids double as output file stems and CSV keys.
fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

pub fn load_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: ManifestFile = serde_json::from_str(&text).map_err(|e| ManifestError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base_dir = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();

    let mut problems = Vec::new();
    if file.entries.is_empty() {
        problems.push("no entries".to_string());
    }
    let mut seen = std::collections::BTreeSet::new();
    for (i, entry) in file.entries.iter().enumerate() {
        let at = format!("entries[{i}] ({:?})", entry.image_id);
        if !valid_id(&entry.image_id) {
            problems.push(format!(
                "{at}: image_id must be non-empty and use only [A-Za-z0-9._-]"
            ));
        }
        if !seen.insert(entry.image_id.as_str()) {
            problems.push(format!("{at}: duplicate image_id"));
        }
        if entry.height == 0 || entry.width == 0 {
            problems.push(format!("{at}: dimensions must be at least 1x1"));
        }
        if entry.prob_maps.is_empty() {
            problems.push(format!("{at}: prob_maps must list at least one file"));
        }
        for rel in &entry.prob_maps {
            let p = base_dir.join(rel);
            if !p.is_file() {
                problems.push(format!("{at}: probability map {rel:?} does not exist"));
            }
        }
        if let Some(rel) = &entry.ground_truth {
            let p = base_dir.join(rel);
            if !p.is_file() {
                problems.push(format!("{at}: ground truth {rel:?} does not exist"));
            }
        }
    }
    if !problems.is_empty() {
        return Err(ManifestError::Invalid {
            path: path.to_path_buf(),
            problems,
        });
    }
    Ok(Manifest {
        entries: file.entries,
        base_dir,
    })
}

impl Manifest {
    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }
}

pub fn save_manifest(path: &Path, file: &ManifestFile) -> Result<(), ManifestError> {
    let mut text = serde_json::to_string_pretty(file).expect("manifest serialization");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
