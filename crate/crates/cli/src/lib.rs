//! File formats, diagnostics, and plotting around `evtap-core`.
//!
//! Everything on-disk lives here: event files (text and binary), ground-truth
//! and trajectory CSVs, the flat key=value scene config, metric reports, SVG
//! trajectory plots, and time-surface image dumps. The `evtap` binary wires
//! these into the `simulate`, `track`, `evaluate`, and `plot` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

pub mod event_files;
pub mod plot;
pub mod scene_config;
pub mod surface_dump;
pub mod tables;

pub use event_files::{detect_format, load_events, save_events, EventFormat};

/// Errors raised by any of the file formats, always carrying the path and,
/// where it exists, the offending line or byte offset.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: byte {offset}: {message}")]
    Bytes {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Validation { path: PathBuf, message: String },
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn bytes(path: &Path, offset: usize, message: impl Into<String>) -> Self {
        FormatError::Bytes {
            path: path.to_path_buf(),
            offset,
            message: message.into(),
        }
    }

    pub fn validation(path: &Path, message: impl Into<String>) -> Self {
        FormatError::Validation {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

/// Writes through a temp file in the destination directory plus a rename.
pub fn atomic_write(
    path: &Path,
    write: impl FnOnce(&mut fs::File) -> std::io::Result<()>,
) -> Result<(), FormatError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir),
        None => tempfile::NamedTempFile::new_in("."),
    }
    .map_err(|source| FormatError::io(path, source))?;
    write(tmp.as_file_mut()).map_err(|source| FormatError::io(path, source))?;
    tmp.persist(path)
        .map_err(|err| FormatError::io(path, err.error))?;
    Ok(())
}
