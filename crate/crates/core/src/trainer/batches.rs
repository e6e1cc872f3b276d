use rand::seq::SliceRandom;

use crate::sampler::{apply_mlm_masking_with, MaskedBatch, MaskingConfig, PairSample, PairTask, SequenceTooLong};
use crate::seeds;

/// Supplies the batch for a given 0-based step. Indexing by step keeps a
/// resumed run on the same batch sequence as an uninterrupted one.
pub trait BatchSource {
    fn batch(&mut self, step: u64) -> Result<Option<MaskedBatch>, SequenceTooLong>;
}

impl BatchSource for Vec<MaskedBatch> {
    fn batch(&mut self, step: u64) -> Result<Option<MaskedBatch>, SequenceTooLong> {
        Ok(self.get(step as usize).cloned())
    }
}

/// Endless homogeneous batches alternating CWP and DUP, reshuffled every
/// epoch, with fresh MLM corruption per step.
pub struct PairBatches {
    samples: Vec<PairSample>,
    kinds: Vec<(PairTask, Vec<usize>)>,
    perms: Vec<Option<(u64, Vec<usize>)>>,
    batch_size: usize,
    vocab_size: usize,
    max_len: usize,
    seed: u64,
    masking: MaskingConfig,
}

fn mask(pairs: &[PairSample], vocab_size: usize, max_len: usize, seed: u64, m: &MaskingConfig) -> Result<MaskedBatch, SequenceTooLong> {
    let mut rng = seeds::rng(seed, seeds::tag::MASK, 0);
    apply_mlm_masking_with(pairs, vocab_size, max_len, m, &mut rng).map(|(b, _)| b.trim_padding())
}

impl PairBatches {
    pub fn new(samples: Vec<PairSample>, batch_size: usize, vocab_size: usize, max_len: usize, seed: u64) -> Self {
        let kinds: Vec<(PairTask, Vec<usize>)> = [PairTask::Cwp, PairTask::Dup]
            .into_iter()
            .map(|k| (k, (0..samples.len()).filter(|&i| samples[i].task == k).collect::<Vec<_>>()))
            .filter(|(_, rows)| !rows.is_empty())
            .collect();
        let perms = vec![None; kinds.len()];
        Self { samples, kinds, perms, batch_size: batch_size.max(1), vocab_size, max_len, seed, masking: MaskingConfig::default() }
    }

    pub fn with_masking(mut self, masking: MaskingConfig) -> Self {
        self.masking = masking;
        self
    }

    fn row(&mut self, kind: usize, q: u64) -> usize {
        let (task, rows) = &self.kinds[kind];
        let n = rows.len() as u64;
        let epoch = q / n;
        let fresh = !matches!(&self.perms[kind], Some((e, _)) if *e == epoch);
        if fresh {
            let mut perm = rows.clone();
            let mut rng = seeds::rng(self.seed, seeds::tag::SHUFFLE, 2 * epoch + task.code() as u64);
            perm.shuffle(&mut rng);
            self.perms[kind] = Some((epoch, perm));
        }
        self.perms[kind].as_ref().unwrap().1[(q % n) as usize]
    }
}

impl BatchSource for PairBatches {
    fn batch(&mut self, step: u64) -> Result<Option<MaskedBatch>, SequenceTooLong> {
        if self.kinds.is_empty() {
            return Ok(None);
        }
        let nk = self.kinds.len() as u64;
        let kind = (step % nk) as usize;
        let start = (step / nk) * self.batch_size as u64;
        let rows: Vec<usize> = (start..start + self.batch_size as u64).map(|q| self.row(kind, q)).collect();
        let pairs: Vec<PairSample> = rows.iter().map(|&r| self.samples[r].clone()).collect();
        mask(&pairs, self.vocab_size, self.max_len, seeds::mix(self.seed, step), &self.masking).map(Some)
    }
}

/// Deterministic evaluation batches: each task's samples in file order,
/// chunked into homogeneous batches.
pub fn fixed_batches(
    samples: &[PairSample],
    batch_size: usize,
    vocab_size: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<MaskedBatch>, SequenceTooLong> {
    fixed_batches_with(samples, batch_size, vocab_size, max_len, seed, &MaskingConfig::default())
}

pub fn fixed_batches_with(
    samples: &[PairSample],
    batch_size: usize,
    vocab_size: usize,
    max_len: usize,
    seed: u64,
    masking: &MaskingConfig,
) -> Result<Vec<MaskedBatch>, SequenceTooLong> {
    let mut out = Vec::new();
    for kind in [PairTask::Cwp, PairTask::Dup] {
        let rows: Vec<PairSample> = samples.iter().filter(|s| s.task == kind).cloned().collect();
        for chunk in rows.chunks(batch_size.max(1)) {
            out.push(mask(chunk, vocab_size, max_len, seeds::mix(seed, out.len() as u64), masking)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples() -> Vec<PairSample> {
        (0..10u32)
            .map(|i| PairSample {
                first: vec![7 + i % 5],
                second: vec![8, 9],
                task: if i % 3 == 0 { PairTask::Dup } else { PairTask::Cwp },
                label: i % 2 == 0,
            })
            .collect()
    }

    #[test]
    fn alternates_tasks_and_is_step_addressable() {
        let mut a = PairBatches::new(samples(), 3, 20, 10, 1);
        let seq: Vec<MaskedBatch> = (0..8).map(|s| a.batch(s).unwrap().unwrap()).collect();
        for (s, b) in seq.iter().enumerate() {
            let want = if s % 2 == 0 { PairTask::Cwp } else { PairTask::Dup };
            assert!(b.task_kinds.iter().all(|&k| k == want));
            assert_eq!(b.rows, 3);
        }
        let mut fresh = PairBatches::new(samples(), 3, 20, 10, 1);
        assert_eq!(fresh.batch(5).unwrap().unwrap(), seq[5]);
        assert_eq!(fresh.batch(2).unwrap().unwrap(), seq[2]);
    }

    #[test]
    fn epochs_cover_every_row() {
        // CWP rows are i = 1, 2, 4, 5, 7, 8; three of them carry label true.
        // With batch 3, steps 0 and 2 make up exactly one epoch.
        let mut a = PairBatches::new(samples(), 3, 20, 10, 4);
        let positives: usize = [0, 2]
            .into_iter()
            .map(|s| a.batch(s).unwrap().unwrap().task_labels.iter().filter(|&&l| l).count())
            .sum();
        assert_eq!(positives, 3);
    }

    #[test]
    fn vec_source_exhausts() {
        let mut v = fixed_batches(&samples(), 4, 20, 10, 0).unwrap();
        assert_eq!(v.len(), 2 + 1);
        assert!(v.batch(3).unwrap().is_none());
    }
}
