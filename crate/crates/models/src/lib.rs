//! Model side of the pipeline, on candle tensors: the discrete layout
//! diffusion model and the controlled latent UI diffusion model.

pub mod checkpoint;
pub mod layout_diffusion;
pub mod nn;
pub mod ui_diffusion;

use thiserror::Error;

pub use candle_core::{DType, Device, Tensor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Layout(#[from] uidiff_core::layout::LayoutError),
    #[error(transparent)]
    Wireframe(#[from] uidiff_core::wireframe::WireframeError),
    #[error("io failure at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint mismatch on {what}: expected {expected}, found {found}")]
    CheckpointMismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss {loss} at step {step} (batch {batch:?})")]
    NonFiniteLoss {
        step: usize,
        loss: f64,
        batch: Vec<String>,
    },
    #[error("frozen parameters changed during training: {0:?}")]
    FrozenDrift(Vec<String>),
    #[error("condition lists {requested} components but only {e_max} slots exist")]
    ConditionTooLarge { requested: usize, e_max: usize },
    #[error("denoiser has not been trained; pass allow_untrained to sample anyway")]
    Untrained,
    #[error("model backend unavailable: {0}")]
    AdapterUnavailable(String),
    #[error("bad training data: {0}")]
    Data(String),
}

impl ModelError {
    pub(crate) fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
