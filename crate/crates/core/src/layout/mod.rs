//! Layout vocabulary shared by every stage of the pipeline.

mod category;
mod condition;
mod metrics;
mod tokenizer;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use category::ComponentCategory;
pub use condition::ComponentCondition;
pub use metrics::{layout_metrics, LayoutMetrics};
pub use tokenizer::{
    AttributeKind, DetokenizeOutput, TokenSequence, TokenizerConfig, TOKENS_PER_SLOT,
};

/// Slack allowed on the right / bottom canvas edge; covers the rounding of
/// the 6-decimal JSON form.
pub const BBOX_EPS: f64 = 1e-5;
pub const DEFAULT_E_MAX: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("layout has {count} elements, tokenizer holds at most {max}")]
    TooManyElements { count: usize, max: usize },
    #[error("element {index} has an invalid bounding box: {reason}")]
    InvalidBBox { index: usize, reason: String },
    #[error("invalid layout: {0}")]
    Invalid(String),
    #[error("token sequence still contains MASK at position {0}")]
    MaskedSequence(usize),
    #[error("slot {0} mixes PAD and non-PAD tokens")]
    MixedPadSlot(usize),
    #[error("token {token} at position {position} is outside its vocabulary")]
    InvalidToken { position: usize, token: u32 },
    #[error("token sequence has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("unknown component category {0:?}")]
    UnknownCategory(String),
    #[error("malformed component list: {0}")]
    BadCondition(String),
    #[error("layout json: {0}")]
    Json(String),
}

/// Normalized bounding box; `x`, `y` is the top-left corner, all values are
/// fractions of the canvas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const FULL: BBox = BBox {
        x: 0.0,
        y: 0.0,
        w: 1.0,
        h: 1.0,
    };

    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.right().min(other.right()) - self.x.max(other.x);
        let h = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Pixel rectangle on a `width`×`height` canvas, rounding each edge.
    pub fn to_pixels(&self, width: u32, height: u32) -> PixelRect {
        let edge = |v: f64, dim: u32| (v * dim as f64).round().clamp(0.0, dim as f64) as u32;
        let x0 = edge(self.x, width);
        let y0 = edge(self.y, height);
        let x1 = edge(self.right(), width).max(x0);
        let y1 = edge(self.bottom(), height).max(y0);
        PixelRect { x0, y0, x1, y1 }
    }

    fn check(&self) -> Option<&'static str> {
        let vals = [self.x, self.y, self.w, self.h];
        if vals.iter().any(|v| !v.is_finite()) {
            Some("non-finite coordinate")
        } else if self.w <= 0.0 {
            Some("w > 0")
        } else if self.h <= 0.0 {
            Some("h > 0")
        } else if self.x < 0.0 {
            Some("x >= 0")
        } else if self.y < 0.0 {
            Some("y >= 0")
        } else if self.right() > 1.0 + BBOX_EPS {
            Some("x + w <= 1")
        } else if self.bottom() > 1.0 + BBOX_EPS {
            Some("y + h <= 1")
        } else {
            None
        }
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersect(&self, other: &PixelRect) -> Option<PixelRect> {
        let r = PixelRect {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        };
        (r.x0 < r.x1 && r.y0 < r.y1).then_some(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutElement {
    pub category: ComponentCategory,
    pub bbox: BBox,
    /// Stacking order, 0 = bottom.
    pub z: usize,
}

/// A flat list of categorized boxes on a portrait canvas. Element order is
/// stacking order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub canvas_w: u32,
    pub canvas_h: u32,
    pub elements: Vec<LayoutElement>,
}

/// One broken invariant, with the offending element when there is one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub index: Option<usize>,
    pub rule: String,
}

impl Violation {
    fn element(index: usize, rule: impl Into<String>) -> Self {
        Self {
            index: Some(index),
            rule: rule.into(),
        }
    }

    fn layout(rule: impl Into<String>) -> Self {
        Self {
            index: None,
            rule: rule.into(),
        }
    }
}

impl Layout {
    pub fn empty(canvas_w: u32, canvas_h: u32) -> Self {
        Self {
            canvas_w,
            canvas_h,
            elements: Vec::new(),
        }
    }

    pub fn default_canvas() -> Self {
        Self::empty(crate::CANVAS_W, crate::CANVAS_H)
    }

    /// Appends an element on top of the stack.
    pub fn push(&mut self, category: ComponentCategory, bbox: BBox) {
        let z = self.elements.len();
        self.elements.push(LayoutElement { category, bbox, z });
    }

    pub fn with_elements(
        canvas_w: u32,
        canvas_h: u32,
        items: impl IntoIterator<Item = (ComponentCategory, BBox)>,
    ) -> Self {
        let mut layout = Self::empty(canvas_w, canvas_h);
        for (c, b) in items {
            layout.push(c, b);
        }
        layout
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn validate(&self) -> Vec<Violation> {
        self.validate_with(DEFAULT_E_MAX)
    }

    /// Every invariant violation; an empty list means the layout is valid.
    pub fn validate_with(&self, e_max: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.elements.len() > e_max {
            out.push(Violation::layout(format!(
                "count <= e_max ({} > {e_max})",
                self.elements.len()
            )));
        }
        if self.canvas_h <= self.canvas_w {
            out.push(Violation::layout(format!(
                "portrait canvas ({}x{})",
                self.canvas_w, self.canvas_h
            )));
        }
        for (i, el) in self.elements.iter().enumerate() {
            if let Some(rule) = el.bbox.check() {
                out.push(Violation::element(i, rule));
            }
            if el.z != i {
                out.push(Violation::element(
                    i,
                    format!("z contiguous from 0 in element order (found z={})", el.z),
                ));
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Errors on the first violation, mapping element geometry to `InvalidBBox`.
    pub fn ensure_valid(&self, e_max: usize) -> Result<(), LayoutError> {
        if self.elements.len() > e_max {
            return Err(LayoutError::TooManyElements {
                count: self.elements.len(),
                max: e_max,
            });
        }
        match self.validate_with(e_max).into_iter().next() {
            None => Ok(()),
            Some(Violation {
                index: Some(index),
                rule,
            }) => Err(LayoutError::InvalidBBox {
                index,
                reason: rule,
            }),
            Some(v) => Err(LayoutError::Invalid(v.rule)),
        }
    }

    /// Counts per category.
    pub fn condition(&self) -> ComponentCondition {
        self.elements.iter().map(|e| e.category).collect()
    }

    /// Canonical JSON encoding with bbox values written to 6 decimals.
    pub fn to_json(&self) -> String {
        let mut s = String::with_capacity(64 + self.elements.len() * 80);
        write!(
            s,
            "{{\"canvas\":{{\"w\":{},\"h\":{}}},\"elements\":[",
            self.canvas_w, self.canvas_h
        )
        .unwrap();
        for (i, el) in self.elements.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let b = el.bbox;
            write!(
                s,
                "{{\"category\":\"{}\",\"bbox\":[{:.6},{:.6},{:.6},{:.6}],\"z\":{}}}",
                el.category.name(),
                b.x,
                b.y,
                b.w,
                b.h,
                el.z
            )
            .unwrap();
        }
        s.push_str("]}");
        s
    }

    pub fn from_json(text: &str) -> Result<Self, LayoutError> {
        let doc: LayoutDoc =
            serde_json::from_str(text).map_err(|e| LayoutError::Json(e.to_string()))?;
        Ok(doc.into())
    }
}

/// Serde mirror of the canonical JSON form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutDoc {
    pub canvas: CanvasDoc,
    pub elements: Vec<ElementDoc>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CanvasDoc {
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElementDoc {
    pub category: ComponentCategory,
    pub bbox: [f64; 4],
    pub z: usize,
}

impl From<LayoutDoc> for Layout {
    fn from(doc: LayoutDoc) -> Self {
        let mut elements: Vec<LayoutElement> = doc
            .elements
            .into_iter()
            .map(|e| LayoutElement {
                category: e.category,
                bbox: BBox::new(e.bbox[0], e.bbox[1], e.bbox[2], e.bbox[3]),
                z: e.z,
            })
            .collect();
        elements.sort_by_key(|e| e.z);
        Layout {
            canvas_w: doc.canvas.w,
            canvas_h: doc.canvas.h,
            elements,
        }
    }
}

impl From<&Layout> for LayoutDoc {
    fn from(layout: &Layout) -> Self {
        let round6 = |v: f64| (v * 1e6).round() / 1e6;
        LayoutDoc {
            canvas: CanvasDoc {
                w: layout.canvas_w,
                h: layout.canvas_h,
            },
            elements: layout
                .elements
                .iter()
                .map(|e| ElementDoc {
                    category: e.category,
                    bbox: [
                        round6(e.bbox.x),
                        round6(e.bbox.y),
                        round6(e.bbox.w),
                        round6(e.bbox.h),
                    ],
                    z: e.z,
                })
                .collect(),
        }
    }
}

impl Serialize for Layout {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        LayoutDoc::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Layout {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        LayoutDoc::deserialize(deserializer).map(Layout::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(b: BBox) -> Layout {
        Layout::with_elements(288, 512, [(ComponentCategory::TOOLBAR, b)])
    }

    #[test]
    fn valid_single_element_has_no_violations() {
        assert!(single(BBox::new(0.0, 0.0, 1.0, 0.1)).validate().is_empty());
    }

    #[test]
    fn zero_width_is_reported_with_index() {
        let v = single(BBox::new(0.1, 0.1, 0.0, 0.2)).validate();
        assert_eq!(v, vec![Violation::element(0, "w > 0")]);
    }

    #[test]
    fn too_many_elements_reported_against_default_e_max() {
        let mut l = Layout::default_canvas();
        for i in 0..21 {
            l.push(
                ComponentCategory::TEXT,
                BBox::new(0.0, i as f64 / 21.0, 0.5, 0.04),
            );
        }
        let v = l.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].index, None);
        assert!(v[0].rule.starts_with("count <= e_max"));
    }

    #[test]
    fn landscape_canvas_and_bad_z_are_violations() {
        let mut l = Layout::with_elements(512, 288, [(ComponentCategory::ICON, BBox::FULL)]);
        l.elements[0].z = 3;
        let v = l.validate();
        assert_eq!(v.len(), 2);
        assert!(v[0].rule.starts_with("portrait"));
        assert_eq!(v[1].index, Some(0));
    }

    #[test]
    fn edge_epsilon_is_tolerated() {
        // y and h rounded separately to 6 decimals can sum to 1.000001
        assert!(single(BBox::new(0.5, 0.123457, 0.5, 0.876544)).is_valid());
        assert!(single(BBox::new(0.5, 0.0, 0.5 + 5e-6, 1.0)).is_valid());
        assert!(!single(BBox::new(0.5, 0.0, 0.5 + 5e-5, 1.0)).is_valid());
    }

    #[test]
    fn canonical_json_shape() {
        let l = single(BBox::new(0.0, 0.0, 1.0, 0.125));
        assert_eq!(
            l.to_json(),
            r#"{"canvas":{"w":288,"h":512},"elements":[{"category":"toolbar","bbox":[0.000000,0.000000,1.000000,0.125000],"z":0}]}"#
        );
        assert_eq!(Layout::from_json(&l.to_json()).unwrap(), l);
    }

    #[test]
    fn json_rejects_unknown_category() {
        let bad = r#"{"canvas":{"w":288,"h":512},"elements":[{"category":"spinner","bbox":[0,0,1,1],"z":0}]}"#;
        assert!(matches!(Layout::from_json(bad), Err(LayoutError::Json(_))));
    }

    #[test]
    fn pixel_rect_rounds_edges() {
        let r = BBox::new(0.5, 0.25, 0.25, 0.5).to_pixels(288, 512);
        assert_eq!(
            r,
            PixelRect {
                x0: 144,
                y0: 128,
                x1: 216,
                y1: 384
            }
        );
        assert_eq!(BBox::FULL.to_pixels(288, 512).area(), 288 * 512);
    }
}
