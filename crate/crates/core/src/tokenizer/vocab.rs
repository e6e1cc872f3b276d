use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{tokenize_normalized, TokenSequence, ADDR_TOKEN, STR_TOKEN};
use crate::corpus::DisasmCorpus;

pub const PAD_ID: u32 = 0;
pub const CLS_ID: u32 = 1;
pub const SEP_ID: u32 = 2;
pub const MASK_ID: u32 = 3;
pub const UNK_ID: u32 = 4;
pub const ADDR_ID: u32 = 5;
pub const STR_ID: u32 = 6;
pub const FIRST_REGULAR_ID: u32 = 7;

const RESERVED: [&str; 7] = ["[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]", ADDR_TOKEN, STR_TOKEN];

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("corpus yields no tokens")]
    EmptyCorpus,
    #[error("min_count must be at least 1")]
    InvalidMinCount,
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid vocabulary file: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub surface: String,
    pub id: u32,
    pub count: u64,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<VocabEntry>,
}

/// Bijective surface <-> id map with the reserved ids 0..=6 fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_entries(entries: Vec<VocabEntry>) -> Result<Self, VocabError> {
        if entries.len() <= RESERVED.len() {
            return Err(VocabError::Invalid(format!(
                "vocabulary needs at least {} entries, found {}",
                RESERVED.len() + 1,
                entries.len()
            )));
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.id as usize != i {
                return Err(VocabError::Invalid(format!("id {} at position {i}", e.id)));
            }
            if i < RESERVED.len() && e.surface != RESERVED[i] {
                return Err(VocabError::Invalid(format!(
                    "reserved id {i} must be {:?}, found {:?}",
                    RESERVED[i], e.surface
                )));
            }
            if e.surface.is_empty() || index.insert(e.surface.clone(), e.id).is_some() {
                return Err(VocabError::Invalid(format!("duplicate or empty surface {:?}", e.surface)));
            }
        }
        Ok(Self { entries, index })
    }

    /// Builds from (surface, count) pairs of regular tokens, ordering them by
    /// descending count then surface.
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>) -> Result<Self, VocabError> {
        let mut regular: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(s, _)| !RESERVED.contains(&s.as_str()))
            .collect();
        if regular.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        regular.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let entries = RESERVED
            .iter()
            .map(|s| (s.to_string(), 0))
            .chain(regular)
            .enumerate()
            .map(|(i, (surface, count))| VocabEntry { surface, id: i as u32, count })
            .collect();
        Self::from_entries(entries)
    }

    /// Number of ids, K.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, surface: &str) -> Option<u32> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(|e| e.surface.as_str())
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn encode(&self, seq: &TokenSequence) -> Vec<u32> {
        seq.tokens
            .iter()
            .map(|t| self.id(&t.surface).unwrap_or(UNK_ID))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .map(|&id| self.surface(id).unwrap_or(RESERVED[UNK_ID as usize]).to_string())
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile { tokens: self.entries.clone() };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, VocabError> {
        let file: VocabFile =
            serde_json::from_str(text).map_err(|e| VocabError::Invalid(e.to_string()))?;
        Self::from_entries(file.tokens)
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        fs::write(path, self.to_json()).map_err(|source| VocabError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let text = fs::read_to_string(path).map_err(|source| VocabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

pub fn encode(seq: &TokenSequence, v: &Vocabulary) -> Vec<u32> {
    v.encode(seq)
}

/// Counts normalized tokens over the corpus and keeps those seen at least
/// `min_count` times. Unparsable instructions are skipped with a warning.
pub fn build_vocab(c: &DisasmCorpus, min_count: u64) -> Result<Vocabulary, VocabError> {
    if min_count == 0 {
        return Err(VocabError::InvalidMinCount);
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut skipped = 0usize;
    for ins in c.instructions() {
        match tokenize_normalized(&ins.text) {
            Ok(seq) => {
                for t in seq.tokens {
                    *counts.entry(t.surface).or_insert(0) += 1;
                }
            }
            Err(e) => {
                skipped += 1;
                warn!("skipping instruction at {}: {e}", ins.address);
            }
        }
    }
    if skipped > 0 {
        warn!("{skipped} instructions could not be tokenized");
    }
    Vocabulary::from_counts(counts.into_iter().filter(|&(_, n)| n >= min_count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{block_from_texts, Function};
    use crate::tokenizer::tokenize_normalized;

    fn corpus(texts: &[&str]) -> DisasmCorpus {
        let f = Function::new("b", "f", vec![block_from_texts("bb", 0, texts, &[])], vec![], 1).unwrap();
        DisasmCorpus::new(vec![f]).unwrap()
    }

    #[test]
    fn retn_only_corpus() {
        let v = build_vocab(&corpus(&["retn"]), 1).unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(v.encode(&tokenize_normalized("retn").unwrap()), [7]);
        assert_eq!(v.encode(&tokenize_normalized("leave").unwrap()), [UNK_ID]);
    }

    #[test]
    fn threshold_and_tie_break() {
        // push x3, rbx x2, rax x2, pop x1
        let c = corpus(&["push rbx", "push rax", "push rbx", "pop rax"]);
        let v = build_vocab(&c, 2).unwrap();
        assert_eq!(v.id("push"), Some(7));
        assert_eq!(v.id("rax"), Some(8));
        assert_eq!(v.id("rbx"), Some(9));
        assert_eq!(v.id("pop"), None);
        assert_eq!(v.len(), 10);
    }

    #[test]
    fn placeholders_are_reserved_not_counted() {
        let v = build_vocab(&corpus(&["call 0x401000", "push \"hi\""]), 1).unwrap();
        assert_eq!(v.id("[addr]"), Some(ADDR_ID));
        assert_eq!(v.entries()[ADDR_ID as usize].count, 0);
        assert_eq!(v.encode(&tokenize_normalized("call 0x401000").unwrap())[1], ADDR_ID);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let v = build_vocab(&corpus(&["mov rax, rbx", "retn"]), 1).unwrap();
        assert_eq!(Vocabulary::from_json(&v.to_json()).unwrap(), v);
        let broken = v.to_json().replace("[CLS]", "[XXX]");
        assert!(Vocabulary::from_json(&broken).is_err());
        assert!(build_vocab(&corpus(&["retn"]), 0).is_err());
        assert!(matches!(build_vocab(&corpus(&["retn"]), 2), Err(VocabError::EmptyCorpus)));
    }

    #[test]
    fn decode_inverts_encode_for_known_ids() {
        let v = build_vocab(&corpus(&["mov rax, qword [rsp+0x58]"]), 1).unwrap();
        let ids: Vec<u32> = (0..v.len() as u32).collect();
        let surfaces = v.decode(&ids);
        let seq = TokenSequence::from_key(&surfaces[7..].join(" "));
        assert_eq!(v.encode(&seq), ids[7..]);
    }
}
