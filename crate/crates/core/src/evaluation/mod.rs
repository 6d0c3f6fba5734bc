//! Label normalization, Recall@K, dataset loading and benchmark reports.

mod benchmark;
mod dataset;
mod normalize;
mod recall;

pub use benchmark::{run_benchmark, BenchmarkOptions, CaseHit, CaseResult, EvalReport};
pub use dataset::{load_dataset, parse_dataset, EvalRecord, LineError, LoadMode, LoadedDataset};
pub use normalize::{normalize_label, LabelKind, Normalizer, SynonymTable};
pub use recall::{mean_recall, recall_at_k, recall_at_k_with};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("synonym table has a cycle through {0:?}")]
    SynonymCycle(String),
    #[error("invalid K: {0}")]
    InvalidK(usize),
    #[error("gold label list is empty after normalization")]
    EmptyGold,
    #[error("benchmark needs at least one record")]
    EmptyDataset,
    #[error("task {0} cannot be benchmarked")]
    UnsupportedTask(String),
    #[error("invalid report: {0}")]
    InvalidReport(String),
}
