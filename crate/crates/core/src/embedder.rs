//! Instruction and block embeddings from a trained encoder, plus the static
//! lookup table used when running the model is not an option.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{BasicBlock, DisasmCorpus};
use crate::model::{forward, params_bytes, Mode, TransformerParams};
use crate::sampler::{MaskedBatch, PairTask, IGNORE_TARGET};
use crate::tokenizer::{tokenize_normalized, TokenSequence, UnparsableInstruction, Vocabulary, CLS_ID, PAD_ID, SEP_ID};

pub const TABLE_MAGIC: &[u8; 4] = b"ASMT";
pub const TABLE_VERSION: u32 = 1;
const ROWS_PER_FORWARD: usize = 64;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not an embedding table (bad magic)")]
    BadMagic,
    #[error("unsupported table version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt embedding table: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstructionEmbedding {
    pub text: String,
    pub vector: Vec<f64>,
}

/// Mean over the instruction's own positions (columns `1..=len`, i.e. between
/// `[CLS]` and `[SEP]`) of the second-last layer's hidden states.
fn pool(hidden: &[f64], row: usize, cols: usize, len: usize, h: usize) -> Vec<f64> {
    let mut v = vec![0.0; h];
    for c in 1..=len {
        let base = (row * cols + c) * h;
        v.iter_mut().zip(&hidden[base..base + h]).for_each(|(a, x)| *a += x);
    }
    v.iter_mut().for_each(|a| *a /= len as f64);
    v
}

/// Embeds many token-id sequences; each is cut to fit `[CLS] .. [SEP]` in
/// `max_len`. Empty sequences yield zero vectors.
pub fn embed_token_batch(p: &TransformerParams, seqs: &[Vec<u32>]) -> Vec<Vec<f64>> {
    let cfg = &p.cfg;
    let h = cfg.hidden_dim;
    let cap = cfg.max_len - 2;
    let mut out = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(ROWS_PER_FORWARD) {
        let lens: Vec<usize> = chunk.iter().map(|s| s.len().min(cap)).collect();
        let cols = lens.iter().max().copied().unwrap_or(0) + 2;
        let mut b = MaskedBatch::empty(cols);
        for (s, &len) in chunk.iter().zip(&lens) {
            let mut ids = vec![PAD_ID; cols];
            ids[0] = CLS_ID;
            ids[1..=len].copy_from_slice(&s[..len]);
            ids[len + 1] = SEP_ID;
            b.input_ids.extend(ids);
            b.attention_mask.extend((0..cols).map(|c| u8::from(c < len + 2)));
            b.segment_ids.extend(std::iter::repeat_n(0, cols));
            b.mlm_targets.extend(std::iter::repeat_n(IGNORE_TARGET, cols));
            b.task_labels.push(false);
            b.task_kinds.push(PairTask::Cwp);
            b.rows += 1;
        }
        let fwd = forward(p, &b, Mode::Inference).expect("embedding batch is well formed");
        let hidden = &fwd.hidden_states[cfg.num_layers - 1];
        for (r, &len) in lens.iter().enumerate() {
            out.push(if len == 0 { vec![0.0; h] } else { pool(hidden, r, cols, len, h) });
        }
    }
    out
}

pub fn embed_tokens(p: &TransformerParams, ids: &[u32]) -> Vec<f64> {
    embed_token_batch(p, &[ids.to_vec()]).pop().expect("one row in, one row out")
}

pub fn embed_instruction(
    p: &TransformerParams,
    text: &str,
    v: &Vocabulary,
) -> Result<InstructionEmbedding, UnparsableInstruction> {
    let seq = tokenize_normalized(text)?;
    Ok(InstructionEmbedding { text: text.to_string(), vector: embed_tokens(p, &v.encode(&seq)) })
}

/// Embeds normalized keys (space-joined token strings).
pub fn embed_keys(p: &TransformerParams, keys: &[String], v: &Vocabulary) -> Vec<Vec<f64>> {
    let seqs: Vec<Vec<u32>> = keys.iter().map(|k| v.encode(&TokenSequence::from_key(k))).collect();
    embed_token_batch(p, &seqs)
}

/// Mean of the block's instruction embeddings.
pub fn embed_block(p: &TransformerParams, block: &BasicBlock, v: &Vocabulary) -> Result<Vec<f64>, UnparsableInstruction> {
    let seqs = block
        .instructions
        .iter()
        .map(|i| tokenize_normalized(&i.text).map(|s| v.encode(&s)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mean(&embed_token_batch(p, &seqs), p.cfg.hidden_dim))
}

pub fn mean(vectors: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for v in vectors {
        m.iter_mut().zip(v).for_each(|(a, x)| *a += x);
    }
    if !vectors.is_empty() {
        m.iter_mut().for_each(|a| *a /= vectors.len() as f64);
    }
    m
}

pub fn params_digest(p: &TransformerParams) -> [u8; 32] {
    Sha256::digest(params_bytes(p)).into()
}

pub fn vocab_digest(v: &Vocabulary) -> [u8; 32] {
    Sha256::digest(v.to_json().as_bytes()).into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub hidden_dim: usize,
    pub checkpoint_digest: [u8; 32],
    pub vocab_digest: [u8; 32],
    /// In export order: frequency descending, then key ascending.
    pub entries: Vec<(String, Vec<f64>)>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(
        hidden_dim: usize,
        checkpoint_digest: [u8; 32],
        vocab_digest: [u8; 32],
        entries: Vec<(String, Vec<f64>)>,
    ) -> Self {
        let index = entries.iter().enumerate().map(|(i, (k, _))| (k.clone(), i)).collect();
        Self { hidden_dim, checkpoint_digest, vocab_digest, entries, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `None` is the caller's out-of-table case.
    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.index.get(key).map(|&i| self.entries[i].1.as_slice())
    }

    /// Looks up raw instruction text after normalization.
    pub fn lookup(&self, text: &str) -> Option<&[f64]> {
        tokenize_normalized(text).ok().and_then(|s| self.get(&s.key()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(TABLE_MAGIC);
        out.extend_from_slice(&TABLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.hidden_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.checkpoint_digest);
        out.extend_from_slice(&self.vocab_digest);
        for (k, v) in &self.entries {
            out.extend_from_slice(&(k.len() as u32).to_le_bytes());
            out.extend_from_slice(k.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TableError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != TABLE_MAGIC {
            return Err(TableError::BadMagic);
        }
        let version = r.u32()?;
        if version != TABLE_VERSION {
            return Err(TableError::UnsupportedVersion(version));
        }
        let h = r.u32()? as usize;
        let n = r.u32()? as usize;
        let ckpt: [u8; 32] = r.take(32)?.try_into().unwrap();
        let vocab: [u8; 32] = r.take(32)?.try_into().unwrap();
        let mut entries = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = r.u32()? as usize;
            let key = std::str::from_utf8(r.take(len)?)
                .map_err(|e| TableError::Corrupt(format!("key is not UTF-8: {e}")))?
                .to_string();
            let vec = r.take(8 * h)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            entries.push((key, vec));
        }
        if r.pos != bytes.len() {
            return Err(TableError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self::new(h, ckpt, vocab, entries))
    }

    pub fn save(&self, path: &Path) -> Result<(), TableError> {
        fs::write(path, self.to_bytes()).map_err(|source| TableError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, TableError> {
        let bytes = fs::read(path).map_err(|source| TableError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TableError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| TableError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TableError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Normalized instruction keys with their corpus frequency, most frequent
/// first and ties in lexicographic order. Unparsable texts are skipped.
pub fn instruction_frequencies(c: &DisasmCorpus) -> Vec<(String, u64)> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for ins in c.instructions() {
        if let Ok(seq) = tokenize_normalized(&ins.text) {
            *counts.entry(seq.key()).or_default() += 1;
        }
    }
    let mut v: Vec<(String, u64)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

pub fn export_table(p: &TransformerParams, c: &DisasmCorpus, v: &Vocabulary, top_n: usize) -> EmbeddingTable {
    let keys: Vec<String> = instruction_frequencies(c).into_iter().take(top_n).map(|(k, _)| k).collect();
    let vecs = embed_keys(p, &keys, v);
    EmbeddingTable::new(p.cfg.hidden_dim, params_digest(p), vocab_digest(v), keys.into_iter().zip(vecs).collect())
}
