use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_atomic, FormatError};
use crate::cam::ClassId;

/// One manifest line: an image and its image-level labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub file: String,
    pub width: u32,
    pub height: u32,
    pub labels: Vec<ClassId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    /// Entries in file order.
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry =
                serde_json::from_str(line).map_err(|e| FormatError::MalformedLine {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            if entry.width == 0 || entry.height == 0 {
                return Err(FormatError::MalformedLine {
                    line: i + 1,
                    reason: "width and height must be positive".into(),
                });
            }
            if !seen.insert(entry.image_id.clone()) {
                return Err(FormatError::DuplicateImageId(entry.image_id));
            }
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    /// Entries sorted by image id; this order defines annotation image ids.
    pub fn canonical(&self) -> Vec<&ManifestEntry> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        v
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            // field order follows the struct, which is stable
            out.push_str(&serde_json::to_string(e).expect("manifest entry serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    Manifest::parse(&text)
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<(), FormatError> {
    write_atomic(path, manifest.to_jsonl().as_bytes())
}
