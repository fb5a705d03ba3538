//! Flat-color wireframe rendering of layouts.
//!
//! The same fixed palette colors training wireframes (re-rendered from view
//! hierarchies) and inference wireframes (rendered from sampled layouts), so
//! the control branch sees one visual convention.

use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{ComponentCategory, Layout, Violation};

pub const PALETTE_VERSION: &str = "uidiff-palette-v1";

/// Farthest-point selection on the 6-level RGB cube, seeded with the white
/// background; minimum pairwise distance is 102.
const PALETTE_V1: [[u8; 3]; ComponentCategory::COUNT] = [
    [0, 0, 0],
    [255, 102, 0],
    [102, 0, 255],
    [0, 255, 102],
    [255, 0, 153],
    [153, 255, 0],
    [0, 153, 255],
    [102, 102, 102],
    [153, 0, 0],
    [0, 153, 0],
    [0, 0, 153],
    [255, 204, 102],
    [204, 102, 255],
    [102, 255, 204],
    [102, 102, 0],
    [102, 0, 102],
    [0, 102, 102],
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [204, 102, 102],
    [102, 204, 102],
    [102, 102, 204],
    [255, 204, 0],
    [204, 0, 255],
];

#[derive(Debug, Error)]
pub enum WireframeError {
    #[error("cannot render an invalid layout: {0:?}")]
    InvalidLayout(Vec<Violation>),
    #[error("palette: {0}")]
    Palette(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    colors: [Rgb<u8>; ComponentCategory::COUNT],
    pub background: Rgb<u8>,
}

impl Default for Palette {
    fn default() -> Self {
        Self::v1()
    }
}

impl Palette {
    pub fn v1() -> Self {
        Self {
            colors: PALETTE_V1.map(Rgb),
            background: Rgb([255, 255, 255]),
        }
    }

    pub fn color(&self, category: ComponentCategory) -> Rgb<u8> {
        self.colors[category.id()]
    }

    /// Exact reverse lookup; `None` for the background or unknown colors.
    pub fn decode(&self, color: Rgb<u8>) -> Option<ComponentCategory> {
        self.colors
            .iter()
            .position(|c| *c == color)
            .and_then(ComponentCategory::from_id)
    }

    /// `palette.json` contents: category name → `#rrggbb`, plus the
    /// background and a version tag.
    pub fn to_json(&self) -> String {
        let doc = PaletteDoc {
            version: PALETTE_VERSION.to_string(),
            background: hex(self.background),
            categories: ComponentCategory::all()
                .map(|c| (c.name().to_string(), hex(self.color(c))))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("palette serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, WireframeError> {
        let doc: PaletteDoc =
            serde_json::from_str(text).map_err(|e| WireframeError::Palette(e.to_string()))?;
        let mut colors = [Rgb([0, 0, 0]); ComponentCategory::COUNT];
        for c in ComponentCategory::all() {
            let v = doc
                .categories
                .get(c.name())
                .ok_or_else(|| WireframeError::Palette(format!("missing {}", c.name())))?;
            colors[c.id()] = parse_hex(v)?;
        }
        let palette = Self {
            colors,
            background: parse_hex(&doc.background)?,
        };
        palette.check_distinct()?;
        Ok(palette)
    }

    pub fn check_distinct(&self) -> Result<(), WireframeError> {
        let mut all: Vec<Rgb<u8>> = self.colors.to_vec();
        all.push(self.background);
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if all[i] == all[j] {
                    return Err(WireframeError::Palette(format!(
                        "duplicate color {}",
                        hex(all[i])
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PaletteDoc {
    version: String,
    background: String,
    categories: BTreeMap<String, String>,
}

pub fn hex(c: Rgb<u8>) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

pub fn parse_hex(s: &str) -> Result<Rgb<u8>, WireframeError> {
    let bad = || WireframeError::Palette(format!("bad color {s:?}"));
    let s = s.strip_prefix('#').ok_or_else(bad)?;
    if s.len() != 6 {
        return Err(bad());
    }
    let ch = |i: usize| u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| bad());
    Ok(Rgb([ch(0)?, ch(2)?, ch(4)?]))
}

/// Paints the background, then every element as a solid rectangle in stacking
/// order. No anti-aliasing.
pub fn render_wireframe(
    layout: &Layout,
    palette: &Palette,
    width: u32,
    height: u32,
) -> Result<RgbImage, WireframeError> {
    let violations = layout.validate_with(usize::MAX);
    if !violations.is_empty() {
        return Err(WireframeError::InvalidLayout(violations));
    }
    let mut img = RgbImage::from_pixel(width, height, palette.background);
    for el in &layout.elements {
        let r = el.bbox.to_pixels(width, height);
        let color = palette.color(el.category);
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                img.put_pixel(x, y, color);
            }
        }
    }
    Ok(img)
}
