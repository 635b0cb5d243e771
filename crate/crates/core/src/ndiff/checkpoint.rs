//! Weight checkpoints: a flat binary of 64-bit little-endian reals plus a
//! JSON manifest listing `(name, shape, offset)` per tensor. The manifest's
//! `meta` object carries model configuration; no timestamps are written so
//! identical runs produce byte-identical checkpoints.

use super::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("binary length {got} bytes does not cover tensor {name} at offset {offset}")]
    Truncated { name: String, offset: u64, got: u64 },
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the binary file.
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn save(
    stem: &Path,
    tensors: &[(String, Tensor)],
    meta: serde_json::Value,
) -> Result<(), CheckpointError> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut blob: Vec<u8> = Vec::new();
    for (name, tensor) in tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            offset: blob.len() as u64,
        });
        for v in tensor.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(stem.with_extension("bin"))?.write_all(&blob)?;
    let manifest = Manifest {
        tensors: entries,
        meta,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(stem.with_extension("json"), json)?;
    Ok(())
}

/// Reads a checkpoint back as `(named tensors, meta)`.
pub fn load(stem: &Path) -> Result<(Vec<(String, Tensor)>, serde_json::Value), CheckpointError> {
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
    let mut blob = Vec::new();
    std::fs::File::open(stem.with_extension("bin"))?.read_to_end(&mut blob)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in manifest.tensors {
        let count: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + count * 8;
        if end > blob.len() {
            return Err(CheckpointError::Truncated {
                name: entry.name,
                offset: entry.offset,
                got: blob.len() as u64,
            });
        }
        let data: Vec<f64> = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        tensors.push((entry.name, Tensor::new(entry.shape, data)));
    }
    Ok((tensors, manifest.meta))
}
