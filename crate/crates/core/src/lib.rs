//! Time-aware federated retrieval over timestamped short documents.

use std::io::Write;
use std::path::Path;

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod ltr;
pub mod pipeline;
pub mod retrieval;
pub mod synth;
pub mod temporal;
pub mod verticals;

pub use error::{Error, Result};

/// Writes `contents` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
