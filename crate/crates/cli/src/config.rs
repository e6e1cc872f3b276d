//! One JSON document covering model, training and sampling settings.

use std::fs;
use std::path::{Path, PathBuf};

use asmlm::model::{ModelConfig, TaskSet};
use asmlm::sampler::{MaskingConfig, DEFAULT_CWP_WINDOW};
use asmlm::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    // Model.
    /// Taken from the vocabulary when absent; must match it when present.
    pub vocab_size: Option<usize>,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub dropout_rate: f64,
    // Training.
    pub batch_size: usize,
    pub total_steps: u64,
    pub learning_rate: f64,
    pub warmup_steps: Option<u64>,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub gradient_clip_norm: f64,
    pub seed: u64,
    pub task_set: TaskSet,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    // Sampling.
    pub cwp_window: usize,
    pub mask_rate: f64,
    pub num_samples: usize,
    pub min_count: u64,
    pub workers: usize,
    // Paths, all optional; flags take precedence.
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub heldout: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        Self {
            vocab_size: None,
            hidden_dim: m.hidden_dim,
            num_layers: m.num_layers,
            num_heads: m.num_heads,
            ffn_dim: m.ffn_dim,
            max_len: m.max_len,
            dropout_rate: m.dropout_rate,
            batch_size: t.batch_size,
            total_steps: t.total_steps,
            learning_rate: t.learning_rate,
            warmup_steps: t.warmup_steps,
            weight_decay: t.weight_decay,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_epsilon: t.adam_epsilon,
            gradient_clip_norm: t.gradient_clip_norm,
            seed: t.seed,
            task_set: t.task_set,
            eval_every: t.eval_every,
            checkpoint_every: t.checkpoint_every,
            cwp_window: DEFAULT_CWP_WINDOW,
            mask_rate: MaskingConfig::default().select_prob,
            num_samples: 10_000,
            min_count: 1,
            workers: 1,
            corpus: None,
            vocab: None,
            samples: None,
            heldout: None,
            checkpoint: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                Self::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn model_config(&self, vocab_len: usize) -> Result<ModelConfig, CliError> {
        if let Some(k) = self.vocab_size.filter(|&k| k != vocab_len) {
            return Err(CliError::Usage(format!("config vocab_size {k} does not match vocabulary size {vocab_len}")));
        }
        let m = ModelConfig {
            vocab_size: vocab_len,
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            ffn_dim: self.ffn_dim,
            max_len: self.max_len,
            dropout_rate: self.dropout_rate,
            task_set: self.task_set,
        };
        m.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(m)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            total_steps: self.total_steps,
            learning_rate: self.learning_rate,
            warmup_steps: self.warmup_steps,
            weight_decay: self.weight_decay,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_epsilon: self.adam_epsilon,
            gradient_clip_norm: self.gradient_clip_norm,
            seed: self.seed,
            task_set: self.task_set,
            eval_every: self.eval_every,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn masking(&self) -> Result<MaskingConfig, CliError> {
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return Err(CliError::Usage(format!("mask_rate {} not in [0, 1]", self.mask_rate)));
        }
        Ok(MaskingConfig { select_prob: self.mask_rate, ..MaskingConfig::default() })
    }
}
