//! Training-pair generation for context-window prediction (CWP) and def-use
//! prediction (DUP), plus masked-language-model corruption of those pairs.

mod io;
mod masking;

use std::collections::HashMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::corpus::{DisasmCorpus, InstrRef};
use crate::seeds;
use crate::tokenizer::{tokenize_normalized, TokenSequence, Vocabulary};

pub use io::{read_samples, write_samples, SampleFileError, SAMPLES_MAGIC, SAMPLES_VERSION};
pub use masking::{
    apply_mlm_masking, apply_mlm_masking_with, MaskedBatch, MaskingConfig, MaskingStats,
    SequenceTooLong, IGNORE_TARGET,
};

pub const DEFAULT_CWP_WINDOW: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplerError {
    #[error("no basic block has two tokenizable instructions")]
    InsufficientCorpus,
    #[error("corpus has no usable def-use edges")]
    NoDefUseEdges,
    #[error("invalid sampler argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairTask {
    Cwp,
    Dup,
}

impl PairTask {
    pub fn code(self) -> u8 {
        match self {
            PairTask::Cwp => 0,
            PairTask::Dup => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(PairTask::Cwp),
            1 => Some(PairTask::Dup),
            _ => None,
        }
    }
}

/// Two encoded instructions with a binary label.
/// CWP: label = second lies in the context window of first.
/// DUP: label = pair is in original def-then-use order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSample {
    pub first: Vec<u32>,
    pub second: Vec<u32>,
    pub task: PairTask,
    pub label: bool,
}

/// A pair before encoding, still pointing into the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefPair {
    pub first: InstrRef,
    pub second: InstrRef,
    pub task: PairTask,
    pub label: bool,
}

/// Normalized token sequences for every instruction that tokenizes.
#[derive(Debug, Clone)]
pub struct TokenizedCorpus<'c> {
    corpus: &'c DisasmCorpus,
    tokens: HashMap<InstrRef, TokenSequence>,
    usable: Vec<InstrRef>,
}

impl<'c> TokenizedCorpus<'c> {
    pub fn new(corpus: &'c DisasmCorpus) -> Self {
        let mut tokens = HashMap::new();
        let mut usable = Vec::new();
        for r in corpus.instruction_refs() {
            let ins = corpus.instruction(r);
            match tokenize_normalized(&ins.text) {
                Ok(seq) => {
                    tokens.insert(r, seq);
                    usable.push(r);
                }
                Err(e) => warn!("instruction at {} excluded from sampling: {e}", ins.address),
            }
        }
        Self { corpus, tokens, usable }
    }

    pub fn corpus(&self) -> &'c DisasmCorpus {
        self.corpus
    }

    pub fn tokens(&self, r: InstrRef) -> Option<&TokenSequence> {
        self.tokens.get(&r)
    }

    /// Tokenizable instructions in corpus order.
    pub fn usable(&self) -> &[InstrRef] {
        &self.usable
    }

    pub fn encode_pair(&self, p: &RefPair, v: &Vocabulary) -> PairSample {
        PairSample {
            first: v.encode(&self.tokens[&p.first]),
            second: v.encode(&self.tokens[&p.second]),
            task: p.task,
            label: p.label,
        }
    }
}

fn in_window(a: InstrRef, b: InstrRef, window: usize) -> bool {
    a.function == b.function && a.block == b.block && a.index.abs_diff(b.index) <= window
}

/// All ordered positive CWP pairs: same block, first before second, distance <= window.
pub fn cwp_positive_pairs(tc: &TokenizedCorpus, window: usize) -> Vec<(InstrRef, InstrRef)> {
    let mut out = Vec::new();
    for &a in tc.usable() {
        for d in 1..=window {
            let b = InstrRef { index: a.index + d, ..a };
            if tc.tokens(b).is_some() {
                out.push((a, b));
            }
        }
    }
    out
}

fn split_counts(n: usize, workers: usize) -> Vec<usize> {
    let workers = workers.max(1);
    (0..workers)
        .map(|w| n / workers + usize::from(w < n % workers))
        .collect()
}

fn cwp_refs_stream(
    tc: &TokenizedCorpus,
    positives: &[(InstrRef, InstrRef)],
    window: usize,
    n: usize,
    seed: u64,
    stream: u64,
) -> Vec<RefPair> {
    let mut rng = seeds::rng(seed, seeds::tag::CWP, stream);
    let usable = tc.usable();
    let n_pos = n.div_ceil(2);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n_pos {
        let (a, b) = positives[rng.random_range(0..positives.len())];
        out.push(RefPair { first: a, second: b, task: PairTask::Cwp, label: true });
    }
    while out.len() < n {
        let a = usable[rng.random_range(0..usable.len())];
        let b = usable[rng.random_range(0..usable.len())];
        if in_window(a, b, window) {
            continue;
        }
        out.push(RefPair { first: a, second: b, task: PairTask::Cwp, label: false });
    }
    out.shuffle(&mut rng);
    out
}

/// CWP pairs as corpus references; half positive, half negative.
pub fn sample_cwp_refs(
    tc: &TokenizedCorpus,
    window: usize,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<RefPair>, SamplerError> {
    if window == 0 || n == 0 {
        return Err(SamplerError::InvalidArgument("window and n must be at least 1".into()));
    }
    let positives = cwp_positive_pairs(tc, window);
    if positives.is_empty() {
        return Err(SamplerError::InsufficientCorpus);
    }
    // A negative needs some pair of instructions outside each other's window;
    // `usable` is in corpus order, so checking its two ends is enough.
    let usable = tc.usable();
    let (lo, hi) = (usable[0], usable[usable.len() - 1]);
    let has_negative = !in_window(lo, hi, window);
    if !has_negative {
        return Err(SamplerError::InsufficientCorpus);
    }
    let mut out = Vec::with_capacity(n);
    for (w, count) in split_counts(n, workers).into_iter().enumerate() {
        if count > 0 {
            out.extend(cwp_refs_stream(tc, &positives, window, count, seed, w as u64));
        }
    }
    Ok(out)
}

pub fn sample_cwp_pairs(
    tc: &TokenizedCorpus,
    v: &Vocabulary,
    window: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<PairSample>, SamplerError> {
    let refs = sample_cwp_refs(tc, window, n, seed, 1)?;
    Ok(refs.iter().map(|p| tc.encode_pair(p, v)).collect())
}

/// Def-use edges whose endpoints both tokenize, as (def, use) references.
pub fn def_use_pairs(tc: &TokenizedCorpus) -> Vec<(InstrRef, InstrRef)> {
    let mut out = Vec::new();
    for (fi, f) in tc.corpus().functions().iter().enumerate() {
        for e in &f.def_use {
            let resolve = |addr| {
                f.slot_of(addr).map(|s| InstrRef { function: fi, block: s.block, index: s.index })
            };
            if let (Some(d), Some(u)) = (resolve(e.def_addr), resolve(e.use_addr)) {
                if tc.tokens(d).is_some() && tc.tokens(u).is_some() {
                    out.push((d, u));
                }
            }
        }
    }
    out
}

pub fn sample_dup_refs(
    tc: &TokenizedCorpus,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<RefPair>, SamplerError> {
    if n == 0 {
        return Err(SamplerError::InvalidArgument("n must be at least 1".into()));
    }
    let edges = def_use_pairs(tc);
    if edges.is_empty() {
        return Err(SamplerError::NoDefUseEdges);
    }
    let mut out = Vec::with_capacity(n);
    for (w, count) in split_counts(n, workers).into_iter().enumerate() {
        let mut rng = seeds::rng(seed, seeds::tag::DUP, w as u64);
        for _ in 0..count {
            let (d, u) = edges[rng.random_range(0..edges.len())];
            let swapped = rng.random_bool(0.5);
            out.push(if swapped {
                RefPair { first: u, second: d, task: PairTask::Dup, label: false }
            } else {
                RefPair { first: d, second: u, task: PairTask::Dup, label: true }
            });
        }
    }
    Ok(out)
}

pub fn sample_dup_pairs(
    tc: &TokenizedCorpus,
    v: &Vocabulary,
    n: usize,
    seed: u64,
) -> Result<Vec<PairSample>, SamplerError> {
    let refs = sample_dup_refs(tc, n, seed, 1)?;
    Ok(refs.iter().map(|p| tc.encode_pair(p, v)).collect())
}

/// `n` CWP pairs followed by `n` DUP pairs, the layout written to `samples.bin`.
/// With `workers > 1` each worker draws from its own stream, so output differs
/// from the single-worker run.
pub fn sample_corpus(
    tc: &TokenizedCorpus,
    v: &Vocabulary,
    window: usize,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<PairSample>, SamplerError> {
    let workers = workers.max(1);
    let (cwp, dup) = if workers == 1 {
        (sample_cwp_refs(tc, window, n, seed, 1), sample_dup_refs(tc, n, seed, 1))
    } else {
        std::thread::scope(|s| {
            let cwp = s.spawn(|| sample_cwp_refs(tc, window, n, seed, workers));
            let dup = s.spawn(|| sample_dup_refs(tc, n, seed, workers));
            (cwp.join().expect("cwp sampler panicked"), dup.join().expect("dup sampler panicked"))
        })
    };
    let (cwp, dup) = (cwp?, dup?);
    Ok(cwp.iter().chain(dup.iter()).map(|p| tc.encode_pair(p, v)).collect())
}
