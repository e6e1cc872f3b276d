//! Intrinsic evaluation: outlier detection over opcode and operand
//! categories, basic-block similarity search with ROC/AUC, and a skip-gram
//! baseline to compare against.

mod blocksearch;
mod categories;
mod outlier;
mod roc;
mod skipgram;

use std::path::PathBuf;

use thiserror::Error;

use crate::tokenizer::UnparsableInstruction;

pub use blocksearch::{
    block_search_auc, classes_to_jsonl, parse_classes, read_classes, BlockClass, BlockSearchResult, BlockSearchTask,
};
pub use categories::{CategoryRules, Taxonomy, OPCODE_TABLE, OPERAND_CATEGORIES};
pub use outlier::{
    category_pools, cosine_distance, cosine_similarity, detect_outlier, generate_outlier_sets, outlier_accuracy,
    CategoryAccuracy, OutlierReport, OutlierSet, SET_SIZE,
};
pub use roc::{roc_auc, roc_csv, roc_curve, trapezoid_auc, RocPoint};
pub use skipgram::{documents, positive_pairs, train_skipgram_baseline, SkipGramConfig, SkipGramModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Unparsable(#[from] UnparsableInstruction),
    #[error("opcode {0:?} is not in the category table")]
    UnlistedOpcode(String),
    #[error("operand pattern {0} is not in the category table")]
    UnlistedPattern(String),
    #[error("{taxonomy} outlier sets need one category with 4+ distinct instructions and another category (found: {found})")]
    InsufficientCategories { taxonomy: Taxonomy, found: String },
    #[error("ROC needs both labels (positives {positives}, negatives {negatives})")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("score {0} is NaN")]
    NonFiniteScore(usize),
    #[error("class {0:?} lists fewer than two blocks")]
    SingletonClass(String),
    #[error("block {binary}/{block} not found in corpus")]
    UnknownBlock { binary: String, block: String },
    #[error("classes line {line}: {reason}")]
    MalformedClasses { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}
