//! `samples.bin`: magic `ASMS`, u32 version, then per record
//! `task u8, label u8, len1 u16, len2 u16, (len1 + len2) x u32 ids`, all little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{PairSample, PairTask};

pub const SAMPLES_MAGIC: &[u8; 4] = b"ASMS";
pub const SAMPLES_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SampleFileError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a samples file (bad magic)")]
    BadMagic,
    #[error("unsupported samples version {0}")]
    UnsupportedVersion(u32),
    #[error("record {index} is truncated or corrupt: {reason}")]
    Corrupt { index: usize, reason: String },
}

pub fn encode_samples(samples: &[PairSample]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SAMPLES_MAGIC);
    out.extend_from_slice(&SAMPLES_VERSION.to_le_bytes());
    for s in samples {
        out.push(s.task.code());
        out.push(u8::from(s.label));
        let l1 = u16::try_from(s.first.len()).expect("instruction longer than u16::MAX tokens");
        let l2 = u16::try_from(s.second.len()).expect("instruction longer than u16::MAX tokens");
        out.extend_from_slice(&l1.to_le_bytes());
        out.extend_from_slice(&l2.to_le_bytes());
        for id in s.first.iter().chain(&s.second) {
            out.extend_from_slice(&id.to_le_bytes());
        }
    }
    out
}

pub fn decode_samples(bytes: &[u8]) -> Result<Vec<PairSample>, SampleFileError> {
    if bytes.len() < 8 || &bytes[..4] != SAMPLES_MAGIC {
        return Err(SampleFileError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SAMPLES_VERSION {
        return Err(SampleFileError::UnsupportedVersion(version));
    }
    let mut pos = 8;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let index = out.len();
        let corrupt = |reason: &str| SampleFileError::Corrupt { index, reason: reason.into() };
        if bytes.len() - pos < 6 {
            return Err(corrupt("truncated header"));
        }
        let task = PairTask::from_code(bytes[pos]).ok_or_else(|| corrupt("unknown task"))?;
        let label = match bytes[pos + 1] {
            0 => false,
            1 => true,
            _ => return Err(corrupt("label is not 0 or 1")),
        };
        let l1 = u16::from_le_bytes([bytes[pos + 2], bytes[pos + 3]]) as usize;
        let l2 = u16::from_le_bytes([bytes[pos + 4], bytes[pos + 5]]) as usize;
        pos += 6;
        if l1 == 0 || l2 == 0 {
            return Err(corrupt("empty instruction"));
        }
        let need = 4 * (l1 + l2);
        if bytes.len() - pos < need {
            return Err(corrupt("truncated ids"));
        }
        let ids: Vec<u32> = bytes[pos..pos + need]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        pos += need;
        out.push(PairSample {
            first: ids[..l1].to_vec(),
            second: ids[l1..].to_vec(),
            task,
            label,
        });
    }
    Ok(out)
}

pub fn write_samples(path: &Path, samples: &[PairSample]) -> Result<(), SampleFileError> {
    fs::write(path, encode_samples(samples)).map_err(|source| SampleFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_samples(path: &Path) -> Result<Vec<PairSample>, SampleFileError> {
    let bytes = fs::read(path).map_err(|source| SampleFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_samples(&bytes)
}
