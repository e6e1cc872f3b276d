//! Command-line driver: every pipeline stage behind one `asmlm` binary.

mod commands;
mod config;

use std::ffi::OsString;
use std::fmt::Display;
use std::path::PathBuf;

use asmlm::corpus::CorpusError;
use asmlm::embedder::TableError;
use asmlm::evalkit::{EvalError, Taxonomy};
use asmlm::model::{CheckpointError, ModelError, Task, TaskSet};
use asmlm::sampler::{SampleFileError, SamplerError};
use asmlm::tokenizer::VocabError;
use asmlm::trainer::TrainError;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::PipelineConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn data(e: impl Display) -> Self {
        CliError::Data(e.to_string())
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::data(e)
            }
        }
    )*};
}

data_errors!(CorpusError, VocabError, SamplerError, SampleFileError, CheckpointError, TableError, EvalError, ModelError);

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            e => CliError::data(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "asmlm", version, about = "Pre-train and evaluate an assembly instruction language model")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize and tokenize every instruction of a corpus.
    Tokenize(TokenizeArgs),
    /// Count tokens over a corpus and write the vocabulary.
    BuildVocab(BuildVocabArgs),
    /// Draw context-window and def-use training pairs.
    Sample(SampleArgs),
    /// Pre-train the encoder on sampled pairs.
    Pretrain(PretrainArgs),
    /// Write one embedding per distinct instruction.
    Embed(EmbedArgs),
    /// Freeze embeddings of the most frequent instructions into a lookup table.
    ExportTable(ExportTableArgs),
    /// Intrinsic evaluations.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Outlier detection over opcode or operand categories.
    Outlier(OutlierArgs),
    /// Basic-block similarity search scored by ROC AUC.
    Bbsearch(BbsearchArgs),
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Adds token ids to each line when given.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub cwp_window: Option<usize>,
    /// Pairs per task; the file holds twice this many records.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Samples file scored at the end of training and every `eval_every` steps.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue the run checkpointed in `--out`.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Comma-separated objectives, e.g. `mlm,cwp`.
    #[arg(long, value_delimiter = ',', value_parser = parse_task)]
    pub tasks: Option<Vec<Task>>,
    /// Record elapsed seconds in metrics.csv (breaks byte-identical reruns).
    #[arg(long)]
    pub wallclock: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Defaults to the vocabulary stored in the checkpoint directory.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportTableArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Every distinct instruction when omitted.
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutlierArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub taxonomy: Taxonomy,
    #[arg(long, default_value_t = 50_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also score a skip-gram baseline trained on the same corpus.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BbsearchArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSONL equivalence classes of `(binary_id, block_id)` pairs.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_task(s: &str) -> Result<Task, String> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_ascii_lowercase()))
        .map_err(|_| format!("unknown task {s:?}; expected mlm, cwp or dup"))
}

fn task_set(tasks: &[Task]) -> Result<TaskSet, CliError> {
    TaskSet::try_from(tasks.to_vec()).map_err(CliError::Usage)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Logging filter comes from `ASMLM_LOG`, defaulting to `warn`.
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("ASMLM_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
