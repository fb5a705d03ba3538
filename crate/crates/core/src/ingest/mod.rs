//! Rico-format dataset ingest: view-hierarchy flattening, the portrait
//! resize pipeline, template captions, prompt dropout and the fine-tuning
//! manifest.

mod caption;
mod dataset;
mod hierarchy;
mod preprocess;
pub mod synth;

use std::path::PathBuf;

use thiserror::Error;

pub use caption::{
    apply_prompt_dropout, generate_caption, screen_kind, CaptionTemplateSet, DEFAULT_PROMPT,
};
pub use dataset::{
    build_training_set, load_manifest_records, read_manifest, DatasetConfig, DatasetStats,
    ManifestEntry, TrainingSample, MANIFEST_FILE, STATS_FILE,
};
pub use hierarchy::{
    load_rico_dir, parse_hierarchy, parse_hierarchy_with, HierarchyNode, ParsedHierarchy,
    RicoRecord,
};
pub use preprocess::{
    preprocess_record, PreprocessOptions, Preprocessed, RejectReason, TrainingRecord,
    WireframeSource,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read image {path}: {reason}")]
    CorruptImage { path: PathBuf, reason: String },
    #[error("record {id}: screenshot {screenshot:?} and wireframe {wireframe:?} disagree in aspect ratio")]
    DimensionMismatch {
        id: String,
        screenshot: (u32, u32),
        wireframe: (u32, u32),
    },
    #[error("record {id}: malformed hierarchy: {reason}")]
    MalformedHierarchy { id: String, reason: String },
    #[error("io failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path} line {line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
