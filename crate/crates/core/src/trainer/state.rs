//! `optimizer.bin`: magic `ASMO`, u32 version, u64 step, u64 tensor count,
//! then per tensor a u64 length followed by the first and second moments
//! as little-endian f64.

use std::fs;
use std::path::Path;

use super::{AdamState, TrainError};
use crate::model::TransformerParams;

pub const OPTIMIZER_FILE: &str = "optimizer.bin";
const MAGIC: &[u8; 4] = b"ASMO";
const VERSION: u32 = 1;

pub fn write_optimizer(path: &Path, s: &AdamState) -> Result<(), TrainError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&s.step.to_le_bytes());
    out.extend_from_slice(&(s.m.len() as u64).to_le_bytes());
    for (m, v) in s.m.iter().zip(&s.v) {
        out.extend_from_slice(&(m.len() as u64).to_le_bytes());
        for x in m.iter().chain(v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|source| TrainError::Io { path: path.to_path_buf(), source })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Option<Vec<f64>> {
        let b = self.take(n.checked_mul(8)?)?;
        Some(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Reads optimizer state and checks it lines up with `p`.
pub fn read_optimizer(path: &Path, p: &TransformerParams) -> Result<AdamState, TrainError> {
    let bytes = fs::read(path).map_err(|source| TrainError::Io { path: path.to_path_buf(), source })?;
    let bad = |reason: &str| TrainError::State { path: path.to_path_buf(), reason: reason.into() };
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != VERSION {
        return Err(bad("unsupported version"));
    }
    let mut r = Reader { bytes: &bytes, pos: 8 };
    let step = r.u64().ok_or_else(|| bad("truncated"))?;
    let count = r.u64().ok_or_else(|| bad("truncated"))? as usize;
    let tensors = p.named_tensors();
    if count != tensors.len() {
        return Err(bad("tensor count differs from the checkpoint"));
    }
    let mut state = AdamState { step, m: Vec::with_capacity(count), v: Vec::with_capacity(count) };
    for (_, t) in &tensors {
        let len = r.u64().ok_or_else(|| bad("truncated"))? as usize;
        if len != t.len() {
            return Err(bad("tensor length differs from the checkpoint"));
        }
        state.m.push(r.f64s(len).ok_or_else(|| bad("truncated"))?);
        state.v.push(r.f64s(len).ok_or_else(|| bad("truncated"))?);
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig, TaskSet};

    #[test]
    fn round_trip() {
        let cfg = ModelConfig { vocab_size: 10, hidden_dim: 4, num_layers: 1, num_heads: 2, ffn_dim: 4, max_len: 5, dropout_rate: 0.0, task_set: TaskSet::ALL };
        let p = init_params(&cfg, 0).unwrap();
        let mut s = AdamState::new(&p);
        s.step = 7;
        s.m[3][1] = 0.25;
        s.v[5][0] = -1.5e-300;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(OPTIMIZER_FILE);
        write_optimizer(&path, &s).unwrap();
        assert_eq!(read_optimizer(&path, &p).unwrap(), s);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_optimizer(&path, &p).is_err());
    }
}
