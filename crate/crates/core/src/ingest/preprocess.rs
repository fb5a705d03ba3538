use std::path::Path;

use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::caption::caption_for_id;
use super::{parse_hierarchy, CaptionTemplateSet, IngestError, RicoRecord};
use crate::layout::Layout;
use crate::wireframe::{render_wireframe, Palette};
use crate::{CANVAS_H, CANVAS_W};

/// Relative tolerance when comparing screenshot and wireframe aspect ratios.
const ASPECT_TOLERANCE: f64 = 0.01;

/// Where the conditioning image of a training record comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireframeSource {
    /// Render the parsed hierarchy with the artifact palette, so training
    /// wireframes match the ones rendered from generated layouts.
    #[default]
    Rerender,
    /// Resize the dataset's own wireframe image (nearest neighbour).
    Shipped,
}

#[derive(Debug, Clone)]
pub struct PreprocessOptions {
    pub wireframe_source: WireframeSource,
    pub palette: Palette,
    pub templates: CaptionTemplateSet,
    pub caption_seed: u64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            wireframe_source: WireframeSource::default(),
            palette: Palette::v1(),
            templates: CaptionTemplateSet::default(),
            caption_seed: 0,
        }
    }
}

/// (screenshot, conditioning wireframe, caption) triple, both images 288×512.
#[derive(Debug, Clone)]
pub struct TrainingRecord {
    pub image: RgbImage,
    pub conditioning: RgbImage,
    pub caption: String,
    pub source_id: String,
    pub layout: Layout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Landscape,
    CorruptImage,
    DimensionMismatch,
    MalformedHierarchy,
}

#[derive(Debug, Clone)]
pub enum Preprocessed {
    Kept(Box<TrainingRecord>),
    Rejected(RejectReason),
}

fn open_rgb(path: &Path) -> Result<RgbImage, IngestError> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| IngestError::CorruptImage {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Drops landscape screens and resizes portrait ones to 288×512, bilinear for
/// the screenshot and nearest-neighbour for the wireframe.
pub fn preprocess_record(
    rec: &RicoRecord,
    opts: &PreprocessOptions,
) -> Result<Preprocessed, IngestError> {
    let shot = open_rgb(&rec.screenshot)?;
    if shot.width() > shot.height() {
        return Ok(Preprocessed::Rejected(RejectReason::Landscape));
    }
    let wire = open_rgb(&rec.wireframe)?;
    let aspect = |img: &RgbImage| img.width() as f64 / img.height() as f64;
    let (sa, wa) = (aspect(&shot), aspect(&wire));
    if (sa - wa).abs() > ASPECT_TOLERANCE * sa {
        return Err(IngestError::DimensionMismatch {
            id: rec.id.clone(),
            screenshot: shot.dimensions(),
            wireframe: wire.dimensions(),
        });
    }

    let parsed = parse_hierarchy(rec)?;
    let mut layout = parsed.layout;
    layout.canvas_w = CANVAS_W;
    layout.canvas_h = CANVAS_H;

    let image = imageops::resize(&shot, CANVAS_W, CANVAS_H, FilterType::Triangle);
    let conditioning = match opts.wireframe_source {
        WireframeSource::Shipped => imageops::resize(&wire, CANVAS_W, CANVAS_H, FilterType::Nearest),
        WireframeSource::Rerender => render_wireframe(&layout, &opts.palette, CANVAS_W, CANVAS_H)
            .map_err(|e| IngestError::MalformedHierarchy {
                id: rec.id.clone(),
                reason: e.to_string(),
            })?,
    };
    let caption = caption_for_id(&rec.id, &layout, &opts.templates, opts.caption_seed);
    Ok(Preprocessed::Kept(Box::new(TrainingRecord {
        image,
        conditioning,
        caption,
        source_id: rec.id.clone(),
        layout,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::HierarchyNode;
    use image::Rgb;

    fn write_pair(dir: &Path, id: &str, shot: (u32, u32), wire: (u32, u32)) -> RicoRecord {
        let s = dir.join(format!("{id}.png"));
        let w = dir.join(format!("{id}_w.png"));
        RgbImage::from_pixel(shot.0, shot.1, Rgb([10, 20, 30])).save(&s).unwrap();
        let mut wimg = RgbImage::from_pixel(wire.0, wire.1, Rgb([255, 255, 255]));
        for y in 0..wire.1 / 2 {
            for x in 0..wire.0 {
                wimg.put_pixel(x, y, Rgb([255, 102, 0]));
            }
        }
        wimg.save(&w).unwrap();
        let (rw, rh) = if shot.0 > shot.1 { (2560.0, 1440.0) } else { (1440.0, 2560.0) };
        RicoRecord {
            id: id.into(),
            screenshot: s,
            wireframe: w,
            hierarchy: HierarchyNode {
                bounds: Some([0.0, 0.0, rw, rh]),
                children: vec![HierarchyNode::labeled("Text Button", [0.0, 0.0, rw, rh / 2.0])],
                ..Default::default()
            },
        }
    }

    fn kept(p: Preprocessed) -> TrainingRecord {
        match p {
            Preprocessed::Kept(r) => *r,
            Preprocessed::Rejected(r) => panic!("rejected: {r:?}"),
        }
    }

    #[test]
    fn portrait_sizes_resize_to_canvas() {
        let dir = tempfile::tempdir().unwrap();
        for (i, size) in [(1080, 1920), (540, 960)].into_iter().enumerate() {
            let rec = write_pair(dir.path(), &format!("p{i}"), size, size);
            let r = kept(preprocess_record(&rec, &PreprocessOptions::default()).unwrap());
            assert_eq!(r.image.dimensions(), (288, 512));
            assert_eq!(r.conditioning.dimensions(), (288, 512));
            assert!(!r.caption.is_empty());
        }
    }

    #[test]
    fn landscape_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_pair(dir.path(), "l", (1920, 1080), (1920, 1080));
        assert!(matches!(
            preprocess_record(&rec, &PreprocessOptions::default()).unwrap(),
            Preprocessed::Rejected(RejectReason::Landscape)
        ));
    }

    #[test]
    fn shipped_wireframe_keeps_flat_colors() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_pair(dir.path(), "s", (1080, 1920), (1440, 2560));
        let opts = PreprocessOptions {
            wireframe_source: WireframeSource::Shipped,
            ..Default::default()
        };
        let r = kept(preprocess_record(&rec, &opts).unwrap());
        let colors: std::collections::HashSet<_> = r.conditioning.pixels().copied().collect();
        assert_eq!(colors.len(), 2);
    }

    #[test]
    fn rerendered_wireframe_uses_palette() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_pair(dir.path(), "r", (540, 960), (540, 960));
        let r = kept(preprocess_record(&rec, &PreprocessOptions::default()).unwrap());
        let p = Palette::v1();
        assert_eq!(
            p.decode(*r.conditioning.get_pixel(144, 100)),
            Some(crate::ComponentCategory::TEXT_BUTTON)
        );
        assert_eq!(*r.conditioning.get_pixel(144, 400), p.background);
    }

    #[test]
    fn aspect_disagreement_and_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_pair(dir.path(), "d", (1080, 1920), (1080, 1080));
        assert!(matches!(
            preprocess_record(&rec, &PreprocessOptions::default()),
            Err(IngestError::DimensionMismatch { .. })
        ));
        let mut missing = rec.clone();
        missing.screenshot = dir.path().join("nope.jpg");
        assert!(matches!(
            preprocess_record(&missing, &PreprocessOptions::default()),
            Err(IngestError::CorruptImage { .. })
        ));
    }
}
