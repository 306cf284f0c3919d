//! File formats: FVOX voxel grids, PFM depth/disparity maps, and the JSON
//! scene, proposal and rotation-bin documents. Writes are atomic
//! (temporary file in the target directory, then rename).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub mod fvox;
pub mod pfm;
pub mod scene_doc;

pub use fvox::{decode_fvox, encode_fvox, load_fvox, save_fvox, FVOX_HEADER_LEN, FVOX_MAGIC, FVOX_VERSION};
pub use pfm::{decode_pfm, encode_pfm, load_depth_pfm, save_depth_pfm, PfmImage};
pub use scene_doc::{
    bins_to_json, load_bins, load_proposals, load_scene, parse_bins, parse_proposals, parse_scene, save_bins,
    save_scene, scene_to_json, Proposal, SceneEncoding, SCENE_FORMAT_VERSION,
};

/// Parse and validation failures of file contents. Every variant locates
/// the problem, by byte offset or by field path.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic at byte 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported {what} version {found} at {location}")]
    UnsupportedVersion { what: &'static str, found: String, location: String },

    #[error("truncated input at byte {offset}: needed {needed} more bytes, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },

    #[error("malformed header at byte {offset}: {msg}")]
    BadHeader { offset: usize, msg: String },

    #[error("{count} unexpected trailing bytes at byte {offset}")]
    TrailingData { offset: usize, count: usize },

    #[error("JSON error at byte {offset} (line {line}, column {column}): {msg}")]
    Json { offset: usize, line: usize, column: usize, msg: String },

    #[error("invalid value at {location}: {msg}")]
    InvalidField { location: String, msg: String },

    #[error("unresolvable reference at {location} ({path}): {msg}")]
    Reference { location: String, path: String, msg: String },
}

impl FormatError {
    pub(crate) fn field(location: impl Into<String>, err: impl std::fmt::Display) -> Self {
        FormatError::InvalidField {
            location: location.into(),
            msg: err.to_string(),
        }
    }

    /// JSON error positioned by byte offset into `src`.
    pub(crate) fn json(src: &[u8], err: &serde_json::Error) -> Self {
        let (line, column) = (err.line(), err.column());
        let offset = if err.is_eof() { src.len() } else { line_col_to_offset(src, line, column) };
        FormatError::Json {
            offset,
            line,
            column,
            msg: err.to_string(),
        }
    }
}

/// Byte offset of a 1-based line/column position, clamped to the input.
fn line_col_to_offset(src: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return src.len();
    }
    let mut start = 0;
    for _ in 1..line {
        match src[start..].iter().position(|&b| b == b'\n') {
            Some(p) => start += p + 1,
            None => return src.len(),
        }
    }
    (start + column.saturating_sub(1)).min(src.len())
}

/// Deserializes JSON, reporting syntax and data errors by byte offset.
pub fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| FormatError::json(bytes, &e).into())
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_file(path)?)
}

/// Pretty-printed JSON with a trailing newline, written atomically.
pub fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::arg(e.to_string()))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to a temporary file beside `path` and renames it into
/// place, so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_from_line_and_column() {
        let src = b"ab\ncdef\ng";
        assert_eq!(line_col_to_offset(src, 1, 1), 0);
        assert_eq!(line_col_to_offset(src, 2, 3), 5);
        assert_eq!(line_col_to_offset(src, 3, 1), 8);
        assert_eq!(line_col_to_offset(src, 9, 1), src.len());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.bin");
        atomic_write(&p, b"first").unwrap();
        atomic_write(&p, b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
