//! Bidirectional transformer encoder with an MLM head and two pair-classification
//! heads (context window and def-use order) on the `[CLS]` position.

mod backward;
mod checkpoint;
mod forward;
mod loss;
pub(crate) mod ops;
mod params;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backward::{backward, loss_and_grad};
pub use checkpoint::{
    load_checkpoint, load_manifest, params_bytes, save_checkpoint, CheckpointError, Manifest, TensorEntry, MANIFEST_FILE, PARAMS_FILE,
};
pub use forward::{forward, ForwardOutput, Mode};
pub use loss::{cwp_loss, dup_loss, mlm_loss, task_loss, total_loss, LossBreakdown};
pub use ops::sigmoid;
pub use params::{init_params, LayerParams, Tensor, TransformerParams};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mlm,
    Cwp,
    Dup,
}

/// Enabled pre-training objectives. Serialized as a list, e.g. `["mlm","cwp"]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Task>", into = "Vec<Task>")]
pub struct TaskSet {
    pub mlm: bool,
    pub cwp: bool,
    pub dup: bool,
}

impl TaskSet {
    pub const ALL: TaskSet = TaskSet { mlm: true, cwp: true, dup: true };
    pub const MLM: TaskSet = TaskSet { mlm: true, cwp: false, dup: false };
    pub const MLM_CWP: TaskSet = TaskSet { mlm: true, cwp: true, dup: false };

    pub fn contains(self, t: Task) -> bool {
        match t {
            Task::Mlm => self.mlm,
            Task::Cwp => self.cwp,
            Task::Dup => self.dup,
        }
    }
}

impl Default for TaskSet {
    fn default() -> Self {
        TaskSet::ALL
    }
}

impl TryFrom<Vec<Task>> for TaskSet {
    type Error = String;

    fn try_from(tasks: Vec<Task>) -> Result<Self, String> {
        let set = TaskSet {
            mlm: tasks.contains(&Task::Mlm),
            cwp: tasks.contains(&Task::Cwp),
            dup: tasks.contains(&Task::Dup),
        };
        if !set.mlm {
            return Err("task_set must contain mlm".into());
        }
        Ok(set)
    }
}

impl From<TaskSet> for Vec<Task> {
    fn from(s: TaskSet) -> Self {
        [Task::Mlm, Task::Cwp, Task::Dup].into_iter().filter(|&t| s.contains(t)).collect()
    }
}

impl fmt::Display for TaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = Vec::<Task>::from(*self)
            .into_iter()
            .map(|t| match t {
                Task::Mlm => "mlm",
                Task::Cwp => "cwp",
                Task::Dup => "dup",
            })
            .collect();
        f.write_str(&names.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub dropout_rate: f64,
    pub task_set: TaskSet,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            hidden_dim: 128,
            num_layers: 12,
            num_heads: 8,
            ffn_dim: 512,
            max_len: 40,
            dropout_rate: 0.1,
            task_set: TaskSet::ALL,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.vocab_size <= crate::tokenizer::FIRST_REGULAR_ID as usize {
            return bad(format!("vocab_size {} leaves no regular tokens", self.vocab_size));
        }
        if self.hidden_dim == 0 || self.num_heads == 0 || self.hidden_dim % self.num_heads != 0 {
            return bad(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1".into());
        }
        if self.ffn_dim < self.hidden_dim {
            return bad(format!("ffn_dim {} < hidden_dim {}", self.ffn_dim, self.hidden_dim));
        }
        if self.max_len < 3 {
            return bad("max_len must fit [CLS] x [SEP]".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} not in [0, 1)", self.dropout_rate));
        }
        if !self.task_set.mlm {
            return bad("task_set must contain mlm".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }
}
