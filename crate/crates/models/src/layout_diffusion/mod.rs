//! Absorbing-state discrete diffusion over layout token sequences.

mod model;
mod sample;
mod schedule;
mod train;

pub use model::{LayoutDenoiser, LayoutModelConfig, CHECKPOINT_KIND};
pub use sample::{sample, sample_many, SampleConfig};
pub use schedule::{corrupt, corrupt_with_pad, DiscreteSchedule};
pub use train::{
    masked_cross_entropy, tokenize_layouts, train_layout, training_step, LayoutTrainConfig,
    TrainLog,
};
