//! Checkpoint directory: `manifest.json` (config, seed, step, tensor index)
//! plus `params.bin` (little-endian f64 tensors concatenated in index order).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{init_params, ModelConfig, ModelError, TransformerParams};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
const DTYPE: &str = "f64le";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("checkpoint does not match its manifest: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into `params.bin`.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: ModelConfig,
    pub seed: u64,
    pub step: u64,
    pub tensors: Vec<TensorEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.to_path_buf(), source }
}

pub fn save_checkpoint(dir: &Path, p: &TransformerParams, seed: u64, step: u64) -> Result<Manifest, CheckpointError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut offset = 0;
    let mut tensors = Vec::new();
    for (name, t) in p.named_tensors() {
        tensors.push(TensorEntry { name, shape: t.shape.clone(), dtype: DTYPE.into(), offset });
        offset += 8 * t.len() as u64;
    }
    let bytes = params_bytes(p);
    let manifest = Manifest { config: p.cfg.clone(), seed, step, tensors };
    let params_path = dir.join(PARAMS_FILE);
    fs::write(&params_path, &bytes).map_err(io_err(&params_path))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
    Ok(manifest)
}

/// Exact contents of `params.bin` for `p`.
pub fn params_bytes(p: &TransformerParams) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(p.num_scalars() * 8);
    for (_, t) in p.named_tensors() {
        for v in &t.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, CheckpointError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| CheckpointError::Manifest(e.to_string()))
}

pub fn load_checkpoint(dir: &Path) -> Result<(TransformerParams, Manifest), CheckpointError> {
    let manifest = load_manifest(dir)?;
    let path = dir.join(PARAMS_FILE);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let mut p = init_params(&manifest.config, 0)?;
    let mut slots = p.named_tensors_mut();
    if slots.len() != manifest.tensors.len() {
        return Err(CheckpointError::Mismatch(format!(
            "expected {} tensors, manifest lists {}",
            slots.len(),
            manifest.tensors.len()
        )));
    }
    for ((name, t), entry) in slots.iter_mut().zip(&manifest.tensors) {
        if *name != entry.name || t.shape != entry.shape || entry.dtype != DTYPE {
            return Err(CheckpointError::Mismatch(format!(
                "tensor {} {:?} {} where {name} {:?} {DTYPE} was expected",
                entry.name, entry.shape, entry.dtype, t.shape
            )));
        }
        let start = entry.offset as usize;
        let end = start + 8 * t.len();
        let chunk = bytes
            .get(start..end)
            .ok_or_else(|| CheckpointError::Mismatch(format!("{name} runs past the end of {PARAMS_FILE}")))?;
        for (v, c) in t.data.iter_mut().zip(chunk.chunks_exact(8)) {
            *v = f64::from_le_bytes(c.try_into().unwrap());
        }
    }
    drop(slots);
    if !p.is_finite() {
        return Err(CheckpointError::Mismatch("non-finite parameter".into()));
    }
    Ok((p, manifest))
}
