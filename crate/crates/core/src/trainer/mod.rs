//! Pre-training loop: AdamW with warmup and linear decay, global-norm
//! clipping, per-step metrics, and resumable checkpoints.

mod batches;
mod optim;
mod state;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    load_checkpoint, loss_and_grad, save_checkpoint, task_loss, forward, CheckpointError, ModelError, Mode,
    TaskSet, TransformerParams,
};
use crate::sampler::{MaskedBatch, SequenceTooLong};
use crate::seeds;

pub use batches::{fixed_batches, fixed_batches_with, BatchSource, PairBatches};
pub use optim::{adamw_update, clip_global_norm, global_norm, learning_rate, AdamHyper, AdamState};
pub use state::{read_optimizer, write_optimizer, OPTIMIZER_FILE};

pub const METRICS_FILE: &str = "metrics.csv";
pub const HELDOUT_FILE: &str = "heldout.csv";
pub const TRAIN_CONFIG_FILE: &str = "train_config.json";
pub const METRICS_HEADER: &str = "step,loss,mlm_loss,cwp_loss,dup_loss,mlm_acc,cwp_acc,dup_acc,lr,seconds";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at step {step}; last good checkpoint: {}", last_checkpoint.as_ref().map_or("none".to_string(), |p| p.display().to_string()))]
    NonFiniteLoss { step: u64, last_checkpoint: Option<PathBuf> },
    #[error("batch stream exhausted at step {step}")]
    StreamExhausted { step: u64 },
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Batch(#[from] SequenceTooLong),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid training state in {path}: {reason}")]
    State { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: u64,
    pub learning_rate: f64,
    /// Defaults to 10% of `total_steps`.
    pub warmup_steps: Option<u64>,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub gradient_clip_norm: f64,
    pub seed: u64,
    pub task_set: TaskSet,
    /// Held-out evaluation period in steps; 0 evaluates only at the end.
    pub eval_every: u64,
    /// Checkpoint period in steps; 0 checkpoints only at the end.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            total_steps: 2000,
            learning_rate: 1e-4,
            warmup_steps: None,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            gradient_clip_norm: 1.0,
            seed: 0,
            task_set: TaskSet::ALL,
            eval_every: 0,
            checkpoint_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn warmup(&self) -> u64 {
        self.warmup_steps.unwrap_or(self.total_steps / 10)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.warmup() > self.total_steps {
            return bad("warmup_steps exceeds total_steps");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) || !(self.gradient_clip_norm > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("adam_epsilon and gradient_clip_norm must be positive, weight_decay non-negative");
        }
        if !self.task_set.mlm {
            return bad("task_set must contain mlm");
        }
        Ok(())
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

/// One row of `metrics.csv`. Accuracies are `None` when the batch holds no
/// rows for that task or the task is disabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainMetrics {
    pub step: u64,
    pub loss: f64,
    pub mlm_loss: f64,
    pub cwp_loss: f64,
    pub dup_loss: f64,
    pub mlm_acc: Option<f64>,
    pub cwp_acc: Option<f64>,
    pub dup_acc: Option<f64>,
    pub lr: f64,
    pub seconds: f64,
}

fn ratio(correct: usize, count: usize) -> Option<f64> {
    (count > 0).then(|| correct as f64 / count as f64)
}

impl TrainMetrics {
    /// CSV row. Wall-clock time is written as 0 unless `wallclock` is set,
    /// which keeps the file byte-identical across repeated runs.
    pub fn csv_row(&self, wallclock: bool) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.loss,
            self.mlm_loss,
            self.cwp_loss,
            self.dup_loss,
            opt(self.mlm_acc),
            opt(self.cwp_acc),
            opt(self.dup_acc),
            self.lr,
            if wallclock { self.seconds } else { 0.0 }
        )
    }
}

/// Inference-mode losses and accuracies pooled over `batches`, each task
/// weighted by its number of predictions.
pub fn evaluate_heldout(p: &TransformerParams, batches: &[MaskedBatch], tasks: TaskSet) -> Result<TrainMetrics, ModelError> {
    let mut sums = [0.0f64; 3];
    let mut correct = [0usize; 3];
    let mut counts = [0usize; 3];
    for b in batches {
        let out = forward(p, b, Mode::Inference)?;
        let lb = task_loss(&out, b, tasks);
        for (i, (l, c, n)) in [
            (lb.mlm, lb.mlm_correct, lb.mlm_count),
            (lb.cwp, lb.cwp_correct, lb.cwp_count),
            (lb.dup, lb.dup_correct, lb.dup_count),
        ]
        .into_iter()
        .enumerate()
        {
            sums[i] += l * n as f64;
            correct[i] += c;
            counts[i] += n;
        }
    }
    let mean = |i: usize| if counts[i] == 0 { 0.0 } else { sums[i] / counts[i] as f64 };
    Ok(TrainMetrics {
        step: 0,
        loss: mean(0) + mean(1) + mean(2),
        mlm_loss: mean(0),
        cwp_loss: mean(1),
        dup_loss: mean(2),
        mlm_acc: ratio(correct[0], counts[0]),
        cwp_acc: ratio(correct[1], counts[1]),
        dup_acc: ratio(correct[2], counts[2]),
        lr: 0.0,
        seconds: 0.0,
    })
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub history: Vec<TrainMetrics>,
    pub heldout: Vec<TrainMetrics>,
}

/// Owns parameters and optimizer state for one run.
pub struct Trainer {
    pub params: TransformerParams,
    pub opt: AdamState,
    pub cfg: TrainConfig,
    out_dir: Option<PathBuf>,
    wallclock: bool,
    last_checkpoint: Option<PathBuf>,
    /// Metric rows already on disk from before a resume.
    prior_rows: Vec<String>,
    prior_heldout: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_path_buf(), source }
}

fn rows_up_to(path: &Path, step: u64) -> Result<Vec<String>, TrainError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| l.split(',').next().and_then(|s| s.parse::<u64>().ok()).is_some_and(|s| s <= step))
        .map(str::to_string)
        .collect())
}

impl Trainer {
    pub fn new(params: TransformerParams, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let opt = AdamState::new(&params);
        Ok(Self {
            params,
            opt,
            cfg,
            out_dir: None,
            wallclock: false,
            last_checkpoint: None,
            prior_rows: Vec::new(),
            prior_heldout: Vec::new(),
        })
    }

    /// Continues the run checkpointed in `dir`, including its metric files.
    pub fn resume(dir: &Path) -> Result<Self, TrainError> {
        let (params, manifest) = load_checkpoint(dir)?;
        let cfg_path = dir.join(TRAIN_CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path).map_err(io_err(&cfg_path))?;
        let cfg: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| TrainError::State { path: cfg_path.clone(), reason: e.to_string() })?;
        let opt = read_optimizer(&dir.join(OPTIMIZER_FILE), &params)?;
        if opt.step != manifest.step {
            return Err(TrainError::State {
                path: dir.to_path_buf(),
                reason: format!("optimizer at step {} but parameters at step {}", opt.step, manifest.step),
            });
        }
        let mut t = Trainer::new(params, cfg)?;
        t.opt = opt;
        t.prior_rows = rows_up_to(&dir.join(METRICS_FILE), manifest.step)?;
        t.prior_heldout = rows_up_to(&dir.join(HELDOUT_FILE), manifest.step)?;
        t.out_dir = Some(dir.to_path_buf());
        t.last_checkpoint = Some(dir.to_path_buf());
        info!("resuming from {} at step {}", dir.display(), manifest.step);
        Ok(t)
    }

    /// Writes checkpoints and metric files into `dir`.
    pub fn with_output(mut self, dir: &Path) -> Self {
        self.out_dir = Some(dir.to_path_buf());
        self
    }

    /// Records real elapsed seconds in `metrics.csv` instead of 0.
    pub fn with_wallclock(mut self, on: bool) -> Self {
        self.wallclock = on;
        self
    }

    pub fn step(&self) -> u64 {
        self.opt.step
    }

    /// One optimizer update on `batch`.
    pub fn train_step(&mut self, batch: &MaskedBatch) -> Result<TrainMetrics, TrainError> {
        let step = self.opt.step;
        let tasks = self.cfg.task_set;
        let mode = Mode::Train { dropout_seed: seeds::mix(self.cfg.seed, step) };
        let (lb, mut grads) = loss_and_grad(&self.params, batch, tasks, mode)?;
        let non_finite = TrainError::NonFiniteLoss { step: step + 1, last_checkpoint: self.last_checkpoint.clone() };
        if !lb.total.is_finite() {
            return Err(non_finite);
        }
        let norm = clip_global_norm(&mut grads, self.cfg.gradient_clip_norm);
        if !norm.is_finite() {
            return Err(non_finite);
        }
        let lr = learning_rate(step, self.cfg.learning_rate, self.cfg.warmup(), self.cfg.total_steps);
        self.opt.apply(&mut self.params, &grads, lr, &self.cfg.hyper());
        Ok(TrainMetrics {
            step: self.opt.step,
            loss: lb.total,
            mlm_loss: lb.mlm,
            cwp_loss: lb.cwp,
            dup_loss: lb.dup,
            mlm_acc: ratio(lb.mlm_correct, lb.mlm_count),
            cwp_acc: ratio(lb.cwp_correct, lb.cwp_count),
            dup_acc: ratio(lb.dup_correct, lb.dup_count),
            lr,
            seconds: 0.0,
        })
    }

    /// Trains until `total_steps`, evaluating on `heldout` when given.
    pub fn run(&mut self, source: &mut dyn BatchSource, heldout: Option<&[MaskedBatch]>) -> Result<TrainReport, TrainError> {
        let start = Instant::now();
        let mut report = TrainReport::default();
        let total = self.cfg.total_steps;
        while self.opt.step < total {
            let step = self.opt.step;
            let batch = source.batch(step)?.ok_or(TrainError::StreamExhausted { step })?;
            let mut m = self.train_step(&batch)?;
            m.seconds = start.elapsed().as_secs_f64();
            debug!("step {} loss {:.5} lr {:.3e}", m.step, m.loss, m.lr);
            report.history.push(m);
            let done = self.opt.step == total;
            let every = |n: u64| n > 0 && self.opt.step % n == 0;
            if let Some(h) = heldout {
                if done || every(self.cfg.eval_every) {
                    let mut e = evaluate_heldout(&self.params, h, self.cfg.task_set)?;
                    e.step = self.opt.step;
                    info!(
                        "step {} held-out loss {:.4} mlm_acc {:?} cwp_acc {:?} dup_acc {:?}",
                        e.step, e.loss, e.mlm_acc, e.cwp_acc, e.dup_acc
                    );
                    report.heldout.push(e);
                }
            }
            if self.out_dir.is_some() && (done || every(self.cfg.checkpoint_every)) {
                self.checkpoint(&report)?;
            }
        }
        Ok(report)
    }

    fn checkpoint(&mut self, report: &TrainReport) -> Result<PathBuf, TrainError> {
        let dir = self.out_dir.clone().expect("output directory set");
        save_checkpoint(&dir, &self.params, self.cfg.seed, self.opt.step)?;
        write_optimizer(&dir.join(OPTIMIZER_FILE), &self.opt)?;
        let cfg_path = dir.join(TRAIN_CONFIG_FILE);
        let text = serde_json::to_string_pretty(&self.cfg).expect("config serializes");
        fs::write(&cfg_path, text + "\n").map_err(io_err(&cfg_path))?;
        for (file, prior, rows) in [
            (METRICS_FILE, &self.prior_rows, &report.history),
            (HELDOUT_FILE, &self.prior_heldout, &report.heldout),
        ] {
            if file == HELDOUT_FILE && prior.is_empty() && rows.is_empty() {
                continue;
            }
            let mut text = String::from(METRICS_HEADER);
            text.push('\n');
            for line in prior.iter().cloned().chain(rows.iter().map(|m| m.csv_row(self.wallclock))) {
                text.push_str(&line);
                text.push('\n');
            }
            let path = dir.join(file);
            fs::write(&path, text).map_err(io_err(&path))?;
        }
        info!("checkpoint at step {} written to {}", self.opt.step, dir.display());
        self.last_checkpoint = Some(dir.clone());
        Ok(dir)
    }
}

/// Trains `p` for `cfg.total_steps` steps without writing any files.
pub fn train(
    p: TransformerParams,
    source: &mut dyn BatchSource,
    cfg: TrainConfig,
) -> Result<(TransformerParams, Vec<TrainMetrics>), TrainError> {
    let mut t = Trainer::new(p, cfg)?;
    let report = t.run(source, None)?;
    Ok((t.params, report.history))
}
