use super::ops;
use super::{ForwardOutput, TaskSet};
use crate::sampler::{MaskedBatch, PairTask, IGNORE_TARGET};

/// Per-task losses and prediction counts for one forward pass. Disabled or
/// absent tasks contribute 0 loss and 0 counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub mlm: f64,
    pub cwp: f64,
    pub dup: f64,
    pub mlm_correct: usize,
    pub mlm_count: usize,
    pub cwp_correct: usize,
    pub cwp_count: usize,
    pub dup_correct: usize,
    pub dup_count: usize,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy over supervised positions; 0 when there are none.
pub fn mlm_loss(out: &ForwardOutput, batch: &MaskedBatch) -> f64 {
    mlm_stats(out, batch).0
}

fn mlm_stats(out: &ForwardOutput, batch: &MaskedBatch) -> (f64, usize, usize) {
    let k = out.mlm_logits.len() / (out.rows * out.cols).max(1);
    let mut sum = 0.0;
    let mut n = 0;
    let mut correct = 0;
    for (pos, &t) in batch.mlm_targets.iter().enumerate() {
        if t == IGNORE_TARGET {
            continue;
        }
        let row = &out.mlm_logits[pos * k..(pos + 1) * k];
        sum += ops::log_sum_exp(row) - row[t as usize];
        n += 1;
        if argmax(row) == t as usize {
            correct += 1;
        }
    }
    (if n == 0 { 0.0 } else { sum / n as f64 }, correct, n)
}

fn pair_stats(logits: &[f64], batch: &MaskedBatch, task: PairTask) -> (f64, usize, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    let mut correct = 0;
    for (r, &z) in logits.iter().enumerate() {
        if batch.task_kinds[r] != task {
            continue;
        }
        let y = batch.task_labels[r];
        sum += if y { ops::softplus_neg(z) } else { ops::softplus_neg(-z) };
        n += 1;
        if (z > 0.0) == y {
            correct += 1;
        }
    }
    (if n == 0 { 0.0 } else { sum / n as f64 }, correct, n)
}

/// Mean binary cross-entropy of `sigmoid(cwp_logit)` over CWP rows.
pub fn cwp_loss(out: &ForwardOutput, batch: &MaskedBatch) -> f64 {
    pair_stats(&out.cwp_logit, batch, PairTask::Cwp).0
}

/// Mean binary cross-entropy of `sigmoid(dup_logit)` over DUP rows.
pub fn dup_loss(out: &ForwardOutput, batch: &MaskedBatch) -> f64 {
    pair_stats(&out.dup_logit, batch, PairTask::Dup).0
}

pub fn task_loss(out: &ForwardOutput, batch: &MaskedBatch, tasks: TaskSet) -> LossBreakdown {
    let mut lb = LossBreakdown::default();
    if tasks.mlm {
        (lb.mlm, lb.mlm_correct, lb.mlm_count) = mlm_stats(out, batch);
    }
    if tasks.cwp {
        (lb.cwp, lb.cwp_correct, lb.cwp_count) = pair_stats(&out.cwp_logit, batch, PairTask::Cwp);
    }
    if tasks.dup {
        (lb.dup, lb.dup_correct, lb.dup_count) = pair_stats(&out.dup_logit, batch, PairTask::Dup);
    }
    lb.total = lb.mlm + lb.cwp + lb.dup;
    lb
}

/// Unweighted sum of the enabled task losses.
pub fn total_loss(out: &ForwardOutput, batch: &MaskedBatch, tasks: TaskSet) -> f64 {
    task_loss(out, batch, tasks).total
}
