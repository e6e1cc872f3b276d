use rand::Rng;
use thiserror::Error;

use super::{PairSample, PairTask};
use crate::seeds;
use crate::tokenizer::{ADDR_ID, CLS_ID, MASK_ID, PAD_ID, SEP_ID};

/// Marks positions without an MLM target.
pub const IGNORE_TARGET: i32 = -1;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("instruction of {len} tokens does not fit in max_len {max_len}")]
pub struct SequenceTooLong {
    pub len: usize,
    pub max_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskingConfig {
    /// Per-token selection probability.
    pub select_prob: f64,
    /// Of selected tokens: fraction replaced by `[MASK]`.
    pub mask_prob: f64,
    /// Of selected tokens: fraction replaced by a random token.
    pub random_prob: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self { select_prob: 0.15, mask_prob: 0.8, random_prob: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MaskingStats {
    pub positions: u64,
    pub selected: u64,
    pub masked: u64,
    pub replaced: u64,
    pub kept: u64,
}

/// Row-major `[rows x cols]` model input for a batch of pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedBatch {
    pub rows: usize,
    pub cols: usize,
    pub input_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
    pub mlm_targets: Vec<i32>,
    pub task_labels: Vec<bool>,
    pub task_kinds: Vec<PairTask>,
}

impl MaskedBatch {
    pub fn empty(cols: usize) -> Self {
        Self {
            rows: 0,
            cols,
            input_ids: Vec::new(),
            segment_ids: Vec::new(),
            attention_mask: Vec::new(),
            mlm_targets: Vec::new(),
            task_labels: Vec::new(),
            task_kinds: Vec::new(),
        }
    }

    pub fn row_len(&self, row: usize) -> usize {
        self.attention_mask[row * self.cols..(row + 1) * self.cols]
            .iter()
            .filter(|&&m| m == 1)
            .count()
    }

    pub fn select_rows(&self, rows: &[usize]) -> MaskedBatch {
        let mut out = MaskedBatch::empty(self.cols);
        for &r in rows {
            let span = r * self.cols..(r + 1) * self.cols;
            out.input_ids.extend_from_slice(&self.input_ids[span.clone()]);
            out.segment_ids.extend_from_slice(&self.segment_ids[span.clone()]);
            out.attention_mask.extend_from_slice(&self.attention_mask[span.clone()]);
            out.mlm_targets.extend_from_slice(&self.mlm_targets[span]);
            out.task_labels.push(self.task_labels[r]);
            out.task_kinds.push(self.task_kinds[r]);
            out.rows += 1;
        }
        out
    }

    /// Re-pads every row to `cols` columns (which must cover every real token).
    pub fn with_cols(&self, cols: usize) -> MaskedBatch {
        let longest = (0..self.rows).map(|r| self.row_len(r)).max().unwrap_or(0);
        assert!(cols >= longest, "cannot cut real tokens: {cols} < {longest}");
        let mut out = MaskedBatch { rows: self.rows, cols, ..MaskedBatch::empty(cols) };
        out.task_labels = self.task_labels.clone();
        out.task_kinds = self.task_kinds.clone();
        for r in 0..self.rows {
            for c in 0..cols {
                if c < self.cols {
                    let i = r * self.cols + c;
                    out.input_ids.push(self.input_ids[i]);
                    out.segment_ids.push(self.segment_ids[i]);
                    out.attention_mask.push(self.attention_mask[i]);
                    out.mlm_targets.push(self.mlm_targets[i]);
                } else {
                    out.input_ids.push(PAD_ID);
                    out.segment_ids.push(0);
                    out.attention_mask.push(0);
                    out.mlm_targets.push(IGNORE_TARGET);
                }
            }
        }
        out
    }

    /// Drops trailing all-padding columns.
    pub fn trim_padding(&self) -> MaskedBatch {
        let longest = (0..self.rows).map(|r| self.row_len(r)).max().unwrap_or(0);
        self.with_cols(longest)
    }

    pub fn supervised_positions(&self) -> usize {
        self.mlm_targets.iter().filter(|&&t| t != IGNORE_TARGET).count()
    }
}

/// Trims the longer span from the right until `[CLS] a [SEP] b [SEP]` fits.
fn truncate_pair(first: &[u32], second: &[u32], max_len: usize) -> (usize, usize) {
    let (mut a, mut b) = (first.len(), second.len());
    while a + b + 3 > max_len && (a > 1 || b > 1) {
        if b >= a && b > 1 {
            b -= 1;
        } else {
            a -= 1;
        }
    }
    (a, b)
}

/// Assembles, truncates, pads and MLM-corrupts each pair. `vocab_size` bounds
/// the random-replacement draw, which is uniform over non-structural ids.
pub fn apply_mlm_masking_with(
    pairs: &[PairSample],
    vocab_size: usize,
    max_len: usize,
    cfg: &MaskingConfig,
    rng: &mut impl Rng,
) -> Result<(MaskedBatch, MaskingStats), SequenceTooLong> {
    if max_len < 8 {
        return Err(SequenceTooLong { len: 0, max_len });
    }
    let mut batch = MaskedBatch::empty(max_len);
    let mut stats = MaskingStats::default();
    for p in pairs {
        let (a, b) = truncate_pair(&p.first, &p.second, max_len);
        if a + b + 3 > max_len {
            return Err(SequenceTooLong { len: a + b, max_len });
        }
        let mut ids = Vec::with_capacity(max_len);
        let mut segs = Vec::with_capacity(max_len);
        ids.push(CLS_ID);
        ids.extend_from_slice(&p.first[..a]);
        ids.push(SEP_ID);
        segs.resize(ids.len(), 0u8);
        ids.extend_from_slice(&p.second[..b]);
        ids.push(SEP_ID);
        segs.resize(ids.len(), 1u8);
        let real = ids.len();

        let mut targets = vec![IGNORE_TARGET; max_len];
        for pos in (1..=a).chain(a + 2..a + 2 + b) {
            stats.positions += 1;
            if !rng.random_bool(cfg.select_prob) {
                continue;
            }
            stats.selected += 1;
            targets[pos] = ids[pos] as i32;
            let r: f64 = rng.random();
            if r < cfg.mask_prob {
                ids[pos] = MASK_ID;
                stats.masked += 1;
            } else if r < cfg.mask_prob + cfg.random_prob {
                ids[pos] = rng.random_range(ADDR_ID..vocab_size as u32);
                stats.replaced += 1;
            } else {
                stats.kept += 1;
            }
        }

        ids.resize(max_len, PAD_ID);
        segs.resize(max_len, 0);
        let mut mask = vec![1u8; real];
        mask.resize(max_len, 0);
        batch.input_ids.extend(ids);
        batch.segment_ids.extend(segs);
        batch.attention_mask.extend(mask);
        batch.mlm_targets.extend(targets);
        batch.task_labels.push(p.label);
        batch.task_kinds.push(p.task);
        batch.rows += 1;
    }
    Ok((batch, stats))
}

pub fn apply_mlm_masking(
    pairs: &[PairSample],
    vocab_size: usize,
    max_len: usize,
    seed: u64,
) -> Result<MaskedBatch, SequenceTooLong> {
    let mut rng = seeds::rng(seed, seeds::tag::MASK, 0);
    apply_mlm_masking_with(pairs, vocab_size, max_len, &MaskingConfig::default(), &mut rng)
        .map(|(b, _)| b)
}
