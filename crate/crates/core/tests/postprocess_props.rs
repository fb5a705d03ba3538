use image::{Rgb, RgbImage};
use proptest::prelude::*;
use uidiff_core::postprocess::{crop_components, emit_xml, generate_code, parse_xml};
use uidiff_core::{BBox, ComponentCategory, Layout};

fn arb_layout() -> impl Strategy<Value = Layout> {
    prop::collection::vec((0usize..25, 0.0f64..0.9, 0.0f64..0.9, 0.01f64..1.0, 0.01f64..1.0), 0..20)
        .prop_map(|items| {
            Layout::with_elements(
                288,
                512,
                items.into_iter().map(|(c, x, y, w, h)| {
                    let w = w.min(1.0 - x);
                    let h = h.min(1.0 - y);
                    (ComponentCategory::from_id(c).unwrap(), BBox::new(x, y, w, h))
                }),
            )
        })
}

fn arb_ui() -> impl Strategy<Value = RgbImage> {
    any::<u64>().prop_map(|s| {
        RgbImage::from_fn(288, 512, |x, y| {
            let v = (x / 16) as u64 * 31 + (y / 16) as u64 * 17 + s;
            Rgb([(v % 7 * 36) as u8, (v % 5 * 50) as u8, (v % 3 * 120) as u8])
        })
    })
}

/// (left, top, width, height) of every positioned block, read back from the HTML.
fn html_blocks(html: &str) -> Vec<(u32, u32, u32, u32)> {
    html.match_indices("style=\"left:")
        .map(|(i, _)| {
            let rest = &html[i + "style=\"".len()..];
            let style = &rest[..rest.find('"').unwrap()];
            let field = |name: &str| -> u32 {
                let f = style.split(';').find(|kv| kv.starts_with(name)).unwrap();
                f[name.len() + 1..].trim_end_matches("px").parse().unwrap()
            };
            (field("left"), field("top"), field("width"), field("height"))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn xml_emission_is_a_fixed_point(layout in arb_layout(), ui in prop::option::of(arb_ui())) {
        let out = generate_code(&layout, ui.as_ref()).unwrap();
        let parsed = parse_xml(&out.xml).unwrap();
        prop_assert_eq!(&parsed, &out.document);
        prop_assert_eq!(emit_xml(&parsed), out.xml);
    }

    #[test]
    fn html_geometry_matches_document(layout in arb_layout()) {
        let out = generate_code(&layout, None).unwrap();
        let blocks = html_blocks(&out.html);
        let nodes: Vec<_> = out.document.nodes().iter().map(|n| (n.x, n.y, n.w, n.h)).collect();
        prop_assert_eq!(blocks, nodes);
        prop_assert_eq!(out.document.root.children.len(), layout.len());
        for n in out.document.nodes() {
            prop_assert!(n.x + n.w <= 288 && n.y + n.h <= 512);
        }
    }

    #[test]
    fn crops_keep_geometry_and_visible_pixels(layout in arb_layout(), ui in arb_ui()) {
        let crops = crop_components(&ui, &layout).unwrap();
        prop_assert_eq!(crops.len(), layout.len());
        for (i, c) in crops.iter().enumerate() {
            prop_assert_eq!(c.index, i);
            prop_assert_eq!(c.image.dimensions(), (c.rect.width(), c.rect.height()));
            prop_assert_eq!(c.fill_color.is_some(), c.occluded_fraction > 0.0);
            prop_assert!((0.0..=1.0).contains(&c.occluded_fraction));
            let above: Vec<_> = crops[i + 1..].iter().map(|o| o.rect).collect();
            for y in c.rect.y0..c.rect.y1 {
                for x in c.rect.x0..c.rect.x1 {
                    let px = *c.image.get_pixel(x - c.rect.x0, y - c.rect.y0);
                    if above.iter().any(|r| r.contains(x, y)) {
                        prop_assert_eq!(Some(px), c.fill_color);
                    } else {
                        prop_assert_eq!(px, *ui.get_pixel(x, y));
                    }
                }
            }
        }
    }
}

#[test]
fn pasting_unoccluded_crops_reproduces_ui() {
    let layout = Layout::with_elements(
        288,
        512,
        [
            (ComponentCategory::TOOLBAR, BBox::new(0.0, 0.0, 1.0, 0.1)),
            (ComponentCategory::LIST_ITEM, BBox::new(0.0, 0.2, 1.0, 0.1)),
            (ComponentCategory::BOTTOM_NAVIGATION, BBox::new(0.0, 0.9, 1.0, 0.1)),
        ],
    );
    let ui = RgbImage::from_fn(288, 512, |x, y| Rgb([x as u8, y as u8, (x ^ y) as u8]));
    let mut canvas = RgbImage::new(288, 512);
    for c in crop_components(&ui, &layout).unwrap() {
        image::imageops::replace(&mut canvas, &c.image, c.rect.x0 as i64, c.rect.y0 as i64);
        for y in c.rect.y0..c.rect.y1 {
            for x in c.rect.x0..c.rect.x1 {
                assert_eq!(canvas.get_pixel(x, y), ui.get_pixel(x, y));
            }
        }
    }
}
