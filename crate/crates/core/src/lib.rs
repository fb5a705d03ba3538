//! Pure (model-free) parts of the UI prototyping pipeline: the layout
//! vocabulary and tokenizer, Rico-style dataset ingest, wireframe rendering,
//! component cropping / code generation and the evaluation harness.

pub mod eval;
pub mod ingest;
pub mod layout;
pub mod postprocess;
pub mod wireframe;

pub use layout::{
    BBox, ComponentCategory, ComponentCondition, Layout, LayoutElement, TokenSequence,
    TokenizerConfig,
};

/// Fixed output resolution of every generated or preprocessed UI image.
pub const CANVAS_W: u32 = 288;
pub const CANVAS_H: u32 = 512;
