use image::{Rgb, RgbImage};
use serde::Serialize;

use super::fill::dominant_fill_color_in;
use super::PostprocessError;
use crate::layout::{ComponentCategory, Layout, PixelRect};

/// One element cut out of a generated UI.
#[derive(Debug, Clone)]
pub struct CroppedComponent {
    pub index: usize,
    pub category: ComponentCategory,
    pub rect: PixelRect,
    pub image: RgbImage,
    /// Color written over occluded pixels; `None` when nothing was occluded.
    pub fill_color: Option<Rgb<u8>>,
    pub occluded_fraction: f64,
    /// Set when no pixel of the element was visible and the fill came from
    /// the whole rect.
    pub fully_occluded: bool,
}

#[derive(Serialize)]
struct CropMeta<'a> {
    index: usize,
    category: &'a str,
    rect: PixelRect,
    fill_color: Option<[u8; 3]>,
    occluded_fraction: f64,
    fully_occluded: bool,
}

impl CroppedComponent {
    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::to_value(CropMeta {
            index: self.index,
            category: self.category.name(),
            rect: self.rect,
            fill_color: self.fill_color.map(|c| c.0),
            occluded_fraction: self.occluded_fraction,
            fully_occluded: self.fully_occluded,
        })
        .expect("crop metadata serializes")
    }
}

pub(super) fn check_canvas(ui: &RgbImage, layout: &Layout) -> Result<(), PostprocessError> {
    if ui.dimensions() != (layout.canvas_w, layout.canvas_h) {
        return Err(PostprocessError::CanvasMismatch {
            ui: ui.dimensions(),
            layout: (layout.canvas_w, layout.canvas_h),
        });
    }
    Ok(())
}

pub(super) fn pixel_rects(layout: &Layout) -> Vec<PixelRect> {
    layout
        .elements
        .iter()
        .map(|e| e.bbox.to_pixels(layout.canvas_w, layout.canvas_h))
        .collect()
}

/// Cuts every element out of `ui`. Pixels of an element covered by any
/// element above it are replaced by the dominant color of its visible
/// pixels. Output order follows the layout.
pub fn crop_components(
    ui: &RgbImage,
    layout: &Layout,
) -> Result<Vec<CroppedComponent>, PostprocessError> {
    check_canvas(ui, layout)?;
    let rects = pixel_rects(layout);
    let mut out: Vec<CroppedComponent> = Vec::with_capacity(rects.len());
    for i in (0..rects.len()).rev() {
        let rect = rects[i];
        let occluders: Vec<PixelRect> = rects[i + 1..]
            .iter()
            .filter_map(|r| r.intersect(&rect))
            .collect();
        let covered = |x: u32, y: u32| occluders.iter().any(|r| r.contains(x, y));

        let mut image = RgbImage::new(rect.width(), rect.height());
        let mut occluded = 0u64;
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                if covered(x, y) {
                    occluded += 1;
                } else {
                    image.put_pixel(x - rect.x0, y - rect.y0, *ui.get_pixel(x, y));
                }
            }
        }

        let mut fill_color = None;
        let mut fully_occluded = false;
        if occluded > 0 {
            let color = if occluded == rect.area() {
                fully_occluded = true;
                tracing::warn!(index = i, "element fully occluded, filling from its whole rect");
                dominant_fill_color_in(ui, rect, |_, _| true)?
            } else {
                dominant_fill_color_in(ui, rect, |x, y| !covered(x, y))?
            };
            for y in rect.y0..rect.y1 {
                for x in rect.x0..rect.x1 {
                    if covered(x, y) {
                        image.put_pixel(x - rect.x0, y - rect.y0, color);
                    }
                }
            }
            fill_color = Some(color);
        }

        out.push(CroppedComponent {
            index: i,
            category: layout.elements[i].category,
            rect,
            image,
            fill_color,
            occluded_fraction: if rect.is_empty() {
                0.0
            } else {
                occluded as f64 / rect.area() as f64
            },
            fully_occluded,
        });
    }
    out.reverse();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::BBox;

    fn fill_rect(img: &mut RgbImage, r: PixelRect, c: [u8; 3]) {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                img.put_pixel(x, y, Rgb(c));
            }
        }
    }

    #[test]
    fn disjoint_elements_are_raw_subimages() {
        let mut ui = RgbImage::from_fn(288, 512, |x, y| Rgb([x as u8, y as u8, 7]));
        ui.put_pixel(0, 0, Rgb([1, 2, 3]));
        let layout = Layout::with_elements(
            288,
            512,
            [
                (ComponentCategory::TOOLBAR, BBox::new(0.0, 0.0, 1.0, 0.125)),
                (ComponentCategory::TEXT, BBox::new(0.25, 0.5, 0.5, 0.25)),
            ],
        );
        let crops = crop_components(&ui, &layout).unwrap();
        assert_eq!(crops.len(), 2);
        for c in &crops {
            assert_eq!(c.fill_color, None);
            assert_eq!(c.occluded_fraction, 0.0);
            let raw = image::imageops::crop_imm(&ui, c.rect.x0, c.rect.y0, c.rect.width(), c.rect.height())
                .to_image();
            assert_eq!(c.image, raw);
        }
        assert_eq!(crops[0].rect, PixelRect { x0: 0, y0: 0, x1: 288, y1: 64 });
    }

    #[test]
    fn occluded_region_filled_with_lower_color() {
        let layout = Layout::with_elements(
            288,
            512,
            [
                (ComponentCategory::CARD, BBox::new(0.0, 0.0, 0.5, 0.25)),
                (ComponentCategory::ICON, BBox::new(0.125, 0.0625, 0.125, 0.0625)),
            ],
        );
        let rects = pixel_rects(&layout);
        let mut ui = RgbImage::from_pixel(288, 512, Rgb([255, 255, 255]));
        fill_rect(&mut ui, rects[0], [0, 0, 255]);
        fill_rect(&mut ui, rects[1], [250, 10, 10]);
        let crops = crop_components(&ui, &layout).unwrap();
        let lower = &crops[0];
        assert_eq!(lower.fill_color, Some(Rgb([0, 0, 255])));
        let expected = rects[1].area() as f64 / rects[0].area() as f64;
        assert!((lower.occluded_fraction - expected).abs() < 1e-12);
        assert!(lower.image.pixels().all(|p| *p == Rgb([0, 0, 255])));
        assert_eq!(crops[1].fill_color, None);
        assert!(crops[1].image.pixels().all(|p| *p == Rgb([250, 10, 10])));
    }

    #[test]
    fn fully_occluded_uses_whole_rect() {
        let layout = Layout::with_elements(
            288,
            512,
            [
                (ComponentCategory::ICON, BBox::new(0.25, 0.25, 0.125, 0.125)),
                (ComponentCategory::MODAL, BBox::new(0.0, 0.0, 1.0, 1.0)),
            ],
        );
        let ui = RgbImage::from_pixel(288, 512, Rgb([40, 80, 120]));
        let crops = crop_components(&ui, &layout).unwrap();
        assert!(crops[0].fully_occluded);
        assert_eq!(crops[0].occluded_fraction, 1.0);
        assert_eq!(crops[0].fill_color, Some(Rgb([40, 80, 120])));
        assert!(!crops[1].fully_occluded);
    }

    #[test]
    fn canvas_mismatch() {
        let ui = RgbImage::new(100, 100);
        assert!(matches!(
            crop_components(&ui, &Layout::default_canvas()),
            Err(PostprocessError::CanvasMismatch { .. })
        ));
    }
}
