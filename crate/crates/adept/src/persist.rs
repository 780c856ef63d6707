//! Raw array files: little-endian `f64` data in `<name>.bin` with a JSON sidecar
//! `<name>.json` holding the shape and free-form metadata.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub dtype: String,
    pub byte_order: String,
    /// `[rows, cols]`, column-major.
    pub shape: [usize; 2],
    pub meta: serde_json::Value,
}

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: bad header: {source}")]
    Header { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

fn paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("bin"), base.with_extension("json"))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `m` (column-major) to `base.bin` and its header to `base.json`.
pub fn write_matrix(base: &Path, m: &DMatrix<f64>, meta: serde_json::Value) -> Result<(), PersistError> {
    let (bin, json) = paths(base);
    let mut bytes = Vec::with_capacity(m.len() * 8);
    for v in m.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin, bytes).map_err(io_err(&bin))?;
    let header = ArrayHeader {
        dtype: "f64".into(),
        byte_order: "little".into(),
        shape: [m.nrows(), m.ncols()],
        meta,
    };
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(&json, text).map_err(io_err(&json))
}

pub fn read_matrix(base: &Path) -> Result<(DMatrix<f64>, ArrayHeader), PersistError> {
    let (bin, json) = paths(base);
    let text = fs::read_to_string(&json).map_err(io_err(&json))?;
    let header: ArrayHeader = serde_json::from_str(&text).map_err(|source| PersistError::Header {
        path: json.clone(),
        source,
    })?;
    if header.dtype != "f64" || header.byte_order != "little" {
        return Err(PersistError::Format {
            path: json,
            reason: format!("unsupported {} / {}", header.dtype, header.byte_order),
        });
    }
    let bytes = fs::read(&bin).map_err(io_err(&bin))?;
    let [rows, cols] = header.shape;
    if bytes.len() != rows * cols * 8 {
        return Err(PersistError::Format {
            path: bin,
            reason: format!("expected {} bytes for {rows}x{cols}, found {}", rows * cols * 8, bytes.len()),
        });
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((DMatrix::from_vec(rows, cols, data), header))
}
