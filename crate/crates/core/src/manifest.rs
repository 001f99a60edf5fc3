//! Dataset manifest: which image files belong to which class.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{Background, Material};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    Parse(String),
    #[error("manifest entry {index} field `{field}`: {message}")]
    Invalid {
        index: usize,
        field: &'static str,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub image_id: String,
    pub material: Material,
    pub background: Background,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative entry paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut seen = HashSet::new();
        for (index, e) in self.entries.iter().enumerate() {
            if e.image_id.trim().is_empty() {
                return Err(ManifestError::Invalid {
                    index,
                    field: "image_id",
                    message: "must be non-empty".into(),
                });
            }
            if e.path.is_empty() {
                return Err(ManifestError::Invalid {
                    index,
                    field: "path",
                    message: "must be non-empty".into(),
                });
            }
            if !seen.insert(e.image_id.as_str()) {
                return Err(ManifestError::Invalid {
                    index,
                    field: "image_id",
                    message: format!("duplicate id {:?}", e.image_id),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Parses manifest JSON; relative paths resolve against `base_dir`.
pub fn parse_manifest_str(
    text: &str,
    base_dir: impl Into<PathBuf>,
) -> Result<DatasetManifest, ManifestError> {
    let mut manifest: DatasetManifest =
        serde_json::from_str(text).map_err(|e| ManifestError::Parse(e.to_string()))?;
    manifest.base_dir = base_dir.into();
    manifest.validate()?;
    Ok(manifest)
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest_str(&text, base)
}
