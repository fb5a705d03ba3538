//! Evaluation harness: text/image compatibility scoring, component coverage
//! against the requested condition, and batch reports.

mod coverage;
mod report;
mod scorer;

use std::path::PathBuf;

use thiserror::Error;

pub use coverage::{component_coverage, Coverage};
pub use report::{
    evaluate_batch, read_jsonl, Aggregate, CategoryCoverage, EvalReport, EvalRequest, EvalResult,
    SampleRow,
};
pub use scorer::{
    cosine, CompatibilityScorer, EmbeddingBackend, FixedBackend, MockBackend, DEFAULT_WEIGHT,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("embedding backend {0:?} is not available in this build")]
    BackendUnavailable(String),
    #[error("request/result ids do not line up: {0}")]
    IdMismatch(String),
    #[error("embedding dimension mismatch: image {image}, text {text}")]
    DimensionMismatch { image: usize, text: usize },
    #[error("{path} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("cannot read image {path}: {reason}")]
    Image { path: PathBuf, reason: String },
    #[error("io failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
