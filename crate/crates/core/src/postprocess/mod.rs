//! Turning a generated UI back into reusable parts: per-component crops with
//! histogram fill for occluded pixels, and GUI code emitted from the layout.

mod codegen;
mod crop;
mod fill;

use thiserror::Error;

pub use codegen::{
    emit_html, emit_xml, generate_code, parse_xml, CodegenOutput, CornerStyle, GuiDocument,
    GuiNode, NodeKind, NodeStyle,
};
pub use crop::{crop_components, CroppedComponent};
pub use fill::{dominant_fill_color, dominant_fill_color_in, QUANT_LEVELS};

#[derive(Debug, Error)]
pub enum PostprocessError {
    #[error("cannot take the dominant color of an empty region")]
    EmptyRegion,
    #[error("ui image is {ui:?} but the layout canvas is {layout:?}")]
    CanvasMismatch { ui: (u32, u32), layout: (u32, u32) },
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("markup parse error: {0}")]
    Parse(String),
}
