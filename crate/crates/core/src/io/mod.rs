//! On-disk formats: the CAMB tensor container, the JSON-lines manifest and
//! COCO-style annotation files.

mod annotations;
mod camb;
mod canonical;
mod manifest;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use annotations::{
    read_annotations, write_annotations, Annotation, AnnotationSet, Category, ImageInfo,
};
pub use camb::{decode_camb, encode_camb, read_camb, write_camb, CAMB_MAGIC, CAMB_VERSION};
pub use canonical::{format_real, to_canonical_json};
pub use manifest::{read_manifest, write_manifest, Manifest, ManifestEntry};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad magic {0:?}, expected \"CAMB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported CAMB version {0}")]
    BadVersion(u16),
    #[error("unsupported CAMB flags {0:#06x}")]
    BadFlags(u16),
    #[error("payload truncated: {needed} bytes needed at offset {offset}, {available} available")]
    TruncatedPayload {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{0} unexpected bytes after the last entry")]
    TrailingBytes(usize),
    #[error("non-finite value in entry {entry} at index {index}")]
    NonFiniteValue { entry: usize, index: usize },
    #[error("image id is not valid UTF-8")]
    BadImageId,
    #[error("entry {entry}: {reason}")]
    BadEntry { entry: usize, reason: String },
    #[error("manifest line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate image id {0:?}")]
    DuplicateImageId(String),
    #[error("schema error at {path}: {message}")]
    SchemaError { path: String, message: String },
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// True for failures of the filesystem rather than of file contents.
    pub fn is_io(&self) -> bool {
        matches!(self, Self::Io { .. })
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so a failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    use std::io::Write;

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| FormatError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| FormatError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| FormatError::io(path, e))?;
    tmp.persist(path).map_err(|e| FormatError::io(path, e.error))?;
    Ok(())
}
