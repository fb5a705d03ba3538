//! Procedural "apps" for desk-scale training: a handful of screen archetypes
//! with jittered geometry, drawn with simple per-category styling, and
//! written out in the Rico directory convention.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::caption::caption_for_id;
use super::{CaptionTemplateSet, HierarchyNode, IngestError, TrainingRecord};
use crate::layout::{BBox, ComponentCategory as C, Layout};
use crate::wireframe::{render_wireframe, Palette};
use crate::{CANVAS_H, CANVAS_W};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppKind {
    Login,
    List,
    Gallery,
    Map,
    MediaPlayer,
    Profile,
    Tutorial,
    Settings,
}

impl AppKind {
    pub const ALL: [AppKind; 8] = [
        AppKind::Login,
        AppKind::List,
        AppKind::Gallery,
        AppKind::Map,
        AppKind::MediaPlayer,
        AppKind::Profile,
        AppKind::Tutorial,
        AppKind::Settings,
    ];
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub portrait: usize,
    pub landscape: usize,
    pub seed: u64,
    /// Portrait screenshot size written to `combined/`.
    pub screenshot_size: (u32, u32),
    /// Portrait wireframe size written to `semantic/`.
    pub wireframe_size: (u32, u32),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            portrait: 10,
            landscape: 0,
            seed: 0,
            screenshot_size: (540, 960),
            wireframe_size: (360, 640),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthApp {
    pub id: String,
    pub kind: AppKind,
    pub layout: Layout,
    theme: Theme,
}

#[derive(Debug, Clone, Copy)]
struct Theme {
    primary: Rgb<u8>,
    accent: Rgb<u8>,
    background: Rgb<u8>,
    surface: Rgb<u8>,
    ink: Rgb<u8>,
    dark: bool,
}

fn hsv(h: f64, s: f64, v: f64) -> Rgb<u8> {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb([to(r), to(g), to(b)])
}

impl Theme {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let hue = rng.random_range(0.0..360.0);
        let dark = rng.random_bool(0.2);
        let (background, surface, ink) = if dark {
            (Rgb([28, 28, 32]), Rgb([48, 48, 54]), Rgb([230, 230, 230]))
        } else {
            let g = rng.random_range(238..=255u8);
            (Rgb([g, g, g]), Rgb([255, 255, 255]), Rgb([40, 40, 40]))
        };
        Self {
            primary: hsv(hue, 0.65, 0.75),
            accent: hsv(hue + rng.random_range(120.0..240.0), 0.7, 0.9),
            background,
            surface,
            ink,
            dark,
        }
    }
}

struct Builder<'a> {
    layout: Layout,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn jitter(&mut self, v: f64, amount: f64) -> f64 {
        v + self.rng.random_range(-amount..=amount)
    }

    fn add(&mut self, c: C, x: f64, y: f64, w: f64, h: f64) {
        if self.layout.len() >= 20 {
            return;
        }
        let x = x.clamp(0.0, 0.98);
        let y = y.clamp(0.0, 0.98);
        let w = w.min(1.0 - x).max(0.01);
        let h = h.min(1.0 - y).max(0.01);
        self.layout.push(c, BBox::new(x, y, w, h));
    }

    fn toolbar(&mut self) -> f64 {
        let h = self.jitter(0.08, 0.01);
        self.add(C::TOOLBAR, 0.0, 0.0, 1.0, h);
        if self.rng.random_bool(0.6) {
            self.add(C::ICON, 0.03, h * 0.2, h * 0.6 * 512.0 / 288.0, h * 0.6);
        }
        h
    }

    fn bottom_nav(&mut self) {
        let h = self.jitter(0.07, 0.01);
        self.add(C::BOTTOM_NAVIGATION, 0.0, 1.0 - h, 1.0, h);
    }
}

fn build_layout(kind: AppKind, rng: &mut ChaCha8Rng) -> Layout {
    let mut b = Builder {
        layout: Layout::default_canvas(),
        rng,
    };
    match kind {
        AppKind::Login => {
            b.toolbar();
            let logo = b.jitter(0.3, 0.05);
            let logo_y = b.jitter(0.14, 0.02);
            b.add(C::IMAGE, 0.5 - logo / 2.0, logo_y, logo, logo * 0.56);
            let mut y = b.jitter(0.38, 0.03);
            let inputs = b.rng.random_range(2..=3);
            for _ in 0..inputs {
                b.add(C::INPUT, 0.1, y, 0.8, 0.065);
                y += 0.09;
            }
            b.add(C::TEXT_BUTTON, 0.1, y + 0.02, 0.8, 0.07);
            if b.rng.random_bool(0.7) {
                b.add(C::TEXT, 0.25, y + 0.12, 0.5, 0.035);
            }
            if b.rng.random_bool(0.3) {
                b.add(C::CHECKBOX, 0.1, y - 0.035, 0.05, 0.028);
            }
        }
        AppKind::List => {
            let top = b.toolbar();
            let rows = b.rng.random_range(4..=6);
            let row_h = b.jitter(0.11, 0.015);
            let with_nav = b.rng.random_bool(0.5);
            for i in 0..rows {
                let y = top + 0.01 + i as f64 * row_h;
                if y + row_h > if with_nav { 0.92 } else { 0.99 } {
                    break;
                }
                b.add(C::LIST_ITEM, 0.0, y, 1.0, row_h - 0.005);
                if i % 2 == 0 || b.rng.random_bool(0.3) {
                    b.add(C::ICON, 0.04, y + row_h * 0.2, 0.12, row_h * 0.6);
                }
            }
            if with_nav {
                b.bottom_nav();
            }
        }
        AppKind::Gallery => {
            let top = b.toolbar();
            let cols = b.rng.random_range(2..=3);
            let rows = b.rng.random_range(2..=4);
            let gap = 0.02;
            let w = (1.0 - gap * (cols as f64 + 1.0)) / cols as f64;
            let h = (0.88 - top - gap * (rows as f64 + 1.0)) / rows as f64;
            for r in 0..rows {
                for c in 0..cols {
                    b.add(
                        C::IMAGE,
                        gap + c as f64 * (w + gap),
                        top + gap + r as f64 * (h + gap),
                        w,
                        h,
                    );
                }
            }
            if b.rng.random_bool(0.5) {
                b.bottom_nav();
            }
        }
        AppKind::Map => {
            let top = b.toolbar();
            b.add(C::MAP_VIEW, 0.0, top, 1.0, 0.92 - top);
            if b.rng.random_bool(0.6) {
                b.add(C::INPUT, 0.05, top + 0.02, 0.9, 0.06);
            }
            b.add(C::TEXT_BUTTON, 0.55, 0.8, 0.4, 0.06);
            b.bottom_nav();
        }
        AppKind::MediaPlayer => {
            let top = b.toolbar();
            let art = if b.rng.random_bool(0.5) { C::VIDEO } else { C::IMAGE };
            let art_h = b.jitter(0.42, 0.04);
            b.add(art, 0.08, top + 0.05, 0.84, art_h);
            b.add(C::TEXT, 0.1, 0.62, 0.8, 0.04);
            b.add(C::TEXT, 0.25, 0.67, 0.5, 0.03);
            b.add(C::SLIDER, 0.08, 0.73, 0.84, 0.03);
            b.add(C::BUTTON_BAR, 0.15, 0.8, 0.7, 0.08);
            for i in 0..3 {
                b.add(C::ICON, 0.24 + i as f64 * 0.2, 0.815, 0.12, 0.05);
            }
            if b.rng.random_bool(0.4) {
                b.add(C::ADVERTISEMENT, 0.0, 0.92, 1.0, 0.08);
            }
        }
        AppKind::Profile => {
            let hero = b.jitter(0.32, 0.04);
            b.add(C::BACKGROUND_IMAGE, 0.0, 0.0, 1.0, hero);
            b.add(C::IMAGE, 0.35, hero - 0.08, 0.3, 0.16);
            b.add(C::TEXT, 0.2, hero + 0.1, 0.6, 0.04);
            b.add(C::TEXT, 0.1, hero + 0.16, 0.8, 0.03);
            let mut y = hero + 0.22;
            while y < 0.85 {
                b.add(C::LIST_ITEM, 0.0, y, 1.0, 0.08);
                y += 0.09;
            }
        }
        AppKind::Tutorial => {
            let top = b.toolbar();
            b.add(C::IMAGE, 0.1, top + 0.04, 0.8, 0.3);
            let paragraphs = b.rng.random_range(2..=4);
            let mut y = top + 0.38;
            for _ in 0..paragraphs {
                let h = b.jitter(0.07, 0.02);
                b.add(C::TEXT, 0.08, y, 0.84, h);
                y += h + 0.02;
            }
            b.add(C::PAGER_INDICATOR, 0.4, 0.86, 0.2, 0.02);
            b.add(C::TEXT_BUTTON, 0.6, 0.91, 0.35, 0.06);
        }
        AppKind::Settings => {
            let top = b.toolbar();
            let rows = b.rng.random_range(4..=7);
            for i in 0..rows {
                let y = top + 0.02 + i as f64 * 0.1;
                b.add(C::TEXT, 0.05, y + 0.025, 0.6, 0.04);
                let control = match b.rng.random_range(0..3) {
                    0 => C::ON_OFF_SWITCH,
                    1 => C::CHECKBOX,
                    _ => C::RADIO_BUTTON,
                };
                b.add(control, 0.82, y + 0.02, 0.12, 0.05);
            }
        }
    }
    b.layout
}

impl SynthApp {
    pub fn generate(seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64);
        let kind = AppKind::ALL[rng.random_range(0..AppKind::ALL.len())];
        Self::generate_kind(kind, &mut rng, format!("synth_{seed}_{index:05}"))
    }

    fn generate_kind(kind: AppKind, rng: &mut ChaCha8Rng, id: String) -> Self {
        let layout = build_layout(kind, rng);
        let theme = Theme::random(rng);
        Self {
            id,
            kind,
            layout,
            theme,
        }
    }

    /// Draws the app at `width`×`height` (any orientation).
    pub fn screenshot(&self, width: u32, height: u32) -> RgbImage {
        let t = self.theme;
        let mut img = RgbImage::from_pixel(width, height, t.background);
        let mut rng = ChaCha8Rng::seed_from_u64(self.id.len() as u64 ^ 0x5eed);
        for el in &self.layout.elements {
            let r = el.bbox.to_pixels(width, height);
            let (x0, y0, x1, y1) = (r.x0 as i64, r.y0 as i64, r.x1 as i64, r.y1 as i64);
            let (w, h) = (x1 - x0, y1 - y0);
            if w <= 0 || h <= 0 {
                continue;
            }
            let radius = (h.min(w) / 4).min(12);
            match el.category {
                C::TOOLBAR => {
                    fill(&mut img, x0, y0, x1, y1, t.primary);
                    text_lines(&mut img, x0 + w / 4, y0, x0 + w / 2, y1, Rgb([250, 250, 250]), 1);
                }
                C::BOTTOM_NAVIGATION => {
                    fill(&mut img, x0, y0, x1, y1, t.surface);
                    fill(&mut img, x0, y0, x1, y0 + 1, shade(t.ink, 0.3, t.surface));
                    for i in 0..4 {
                        let cx = x0 + w * (2 * i + 1) / 8;
                        disc(&mut img, cx, y0 + h / 2, (h / 5).max(2), if i == 0 { t.primary } else { shade(t.ink, 0.5, t.surface) });
                    }
                }
                C::TEXT => text_lines(&mut img, x0, y0, x1, y1, t.ink, 3),
                C::TEXT_BUTTON => {
                    rounded(&mut img, x0, y0, x1, y1, radius, t.accent);
                    text_lines(&mut img, x0 + w / 3, y0, x1 - w / 3, y1, Rgb([255, 255, 255]), 1);
                }
                C::ICON | C::RADIO_BUTTON => {
                    disc(&mut img, (x0 + x1) / 2, (y0 + y1) / 2, (w.min(h) / 2).max(1), t.accent);
                }
                C::IMAGE | C::BACKGROUND_IMAGE | C::VIDEO | C::ADVERTISEMENT => {
                    let a = hsv(rng.random_range(0.0..360.0), 0.5, 0.85);
                    let b = hsv(rng.random_range(0.0..360.0), 0.6, 0.55);
                    gradient(&mut img, x0, y0, x1, y1, a, b);
                    if el.category == C::VIDEO {
                        disc(&mut img, (x0 + x1) / 2, (y0 + y1) / 2, (h / 8).max(2), Rgb([255, 255, 255]));
                    }
                    if el.category == C::ADVERTISEMENT {
                        fill(&mut img, x0, y0, x0 + w / 10, y0 + h / 3, Rgb([255, 204, 0]));
                    }
                }
                C::MAP_VIEW => {
                    fill(&mut img, x0, y0, x1, y1, Rgb([222, 236, 214]));
                    for k in 0..6 {
                        let yy = y0 + h * k / 6 + (rng.random_range(0..(h / 6).max(1)));
                        fill(&mut img, x0, yy, x1, yy + 3, Rgb([255, 255, 255]));
                        let xx = x0 + w * k / 6;
                        fill(&mut img, xx, y0, xx + 3, y1, Rgb([250, 240, 200]));
                    }
                }
                C::LIST_ITEM | C::CARD => {
                    fill(&mut img, x0, y0, x1, y1, t.surface);
                    fill(&mut img, x0, y1 - 1, x1, y1, shade(t.ink, 0.2, t.surface));
                    text_lines(&mut img, x0 + w / 5, y0 + h / 6, x1 - w / 10, y1 - h / 6, t.ink, 2);
                }
                C::INPUT => {
                    fill(&mut img, x0, y0, x1, y1, shade(t.ink, 0.06, t.surface));
                    fill(&mut img, x0, y1 - 2, x1, y1, t.primary);
                }
                C::SLIDER => {
                    let cy = (y0 + y1) / 2;
                    fill(&mut img, x0, cy - 1, x1, cy + 1, shade(t.ink, 0.3, t.background));
                    fill(&mut img, x0, cy - 1, x0 + w / 3, cy + 1, t.accent);
                    disc(&mut img, x0 + w / 3, cy, (h / 2).max(2), t.accent);
                }
                C::ON_OFF_SWITCH => {
                    rounded(&mut img, x0, y0 + h / 4, x1, y1 - h / 4, h / 4, shade(t.accent, 0.5, t.background));
                    disc(&mut img, x1 - h / 2, (y0 + y1) / 2, (h / 3).max(1), t.accent);
                }
                C::CHECKBOX => {
                    fill(&mut img, x0, y0, x1, y1, t.accent);
                    fill(&mut img, x0 + 2, y0 + 2, x1 - 2, y1 - 2, t.surface);
                }
                C::PAGER_INDICATOR => {
                    for i in 0..4 {
                        let cx = x0 + w * (2 * i + 1) / 8;
                        disc(&mut img, cx, (y0 + y1) / 2, (h / 2).max(1), if i == 0 { t.accent } else { shade(t.ink, 0.3, t.background) });
                    }
                }
                C::BUTTON_BAR => fill(&mut img, x0, y0, x1, y1, shade(t.primary, 0.15, t.background)),
                _ => {
                    fill(&mut img, x0, y0, x1, y1, shade(t.primary, 0.3, t.surface));
                    text_lines(&mut img, x0 + 4, y0, x1 - 4, y1, t.ink, 1);
                }
            }
        }
        if self.theme.dark {
            // status bar
            fill(&mut img, 0, 0, width as i64, (height / 40) as i64, Rgb([0, 0, 0]));
        }
        img
    }

    /// Rico-style hierarchy in a 1440×2560 (or 2560×1440) pixel space.
    pub fn hierarchy(&self, landscape: bool) -> HierarchyNode {
        let (w, h) = if landscape { (2560.0, 1440.0) } else { (1440.0, 2560.0) };
        let children = self
            .layout
            .elements
            .iter()
            .map(|el| {
                let b = el.bbox;
                let mut label = el.category.name().to_string();
                // Rico capitalizes labels
                label = label
                    .split(' ')
                    .map(|word| {
                        let mut cs = word.chars();
                        cs.next()
                            .map(|f| f.to_uppercase().collect::<String>() + cs.as_str())
                            .unwrap_or_default()
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
                HierarchyNode::labeled(
                    &label,
                    [
                        (b.x * w).round(),
                        (b.y * h).round(),
                        (b.right() * w).round(),
                        (b.bottom() * h).round(),
                    ],
                )
            })
            .collect();
        HierarchyNode {
            bounds: Some([0.0, 0.0, w, h]),
            class: Some("com.android.internal.policy.PhoneWindow$DecorView".into()),
            children: vec![HierarchyNode {
                bounds: Some([0.0, 0.0, w, h]),
                class: Some("android.widget.FrameLayout".into()),
                children,
                ..Default::default()
            }],
            ..Default::default()
        }
    }

    /// A ready-to-train record at 288×512 without touching the filesystem.
    pub fn training_record(&self, palette: &Palette, templates: &CaptionTemplateSet, caption_seed: u64) -> TrainingRecord {
        TrainingRecord {
            image: self.screenshot(CANVAS_W, CANVAS_H),
            conditioning: render_wireframe(&self.layout, palette, CANVAS_W, CANVAS_H)
                .expect("synthetic layouts are valid"),
            caption: caption_for_id(&self.id, &self.layout, templates, caption_seed),
            source_id: self.id.clone(),
            layout: self.layout.clone(),
        }
    }
}

/// `n` in-memory training records.
pub fn synth_training_records(n: usize, seed: u64) -> Vec<TrainingRecord> {
    let palette = Palette::v1();
    let templates = CaptionTemplateSet::default();
    (0..n)
        .map(|i| SynthApp::generate(seed, i).training_record(&palette, &templates, seed))
        .collect()
}

/// Writes `portrait + landscape` records under `root` as
/// `combined/<id>.jpg`, `semantic/<id>.png` and `hierarchies/<id>.json`.
pub fn write_rico_dir(root: &Path, cfg: &SynthConfig) -> Result<Vec<String>, IngestError> {
    for sub in ["combined", "semantic", "hierarchies"] {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| IngestError::io(&dir, e))?;
    }
    let palette = Palette::v1();
    let mut ids = Vec::new();
    for i in 0..cfg.portrait + cfg.landscape {
        let landscape = i >= cfg.portrait;
        let app = SynthApp::generate(cfg.seed, i);
        let flip = |(w, h): (u32, u32)| if landscape { (h, w) } else { (w, h) };
        let (sw, sh) = flip(cfg.screenshot_size);
        let (ww, wh) = flip(cfg.wireframe_size);
        let mut wire_layout = app.layout.clone();
        wire_layout.canvas_w = ww.min(wh);
        wire_layout.canvas_h = ww.max(wh);
        let wire = render_wireframe(&wire_layout, &palette, ww, wh)
            .expect("synthetic layouts are valid");
        let save = |rel: String, img: &RgbImage| {
            let path = root.join(rel);
            img.save(&path)
                .map_err(|e| IngestError::io(&path, std::io::Error::other(e.to_string())))
        };
        save(format!("combined/{}.jpg", app.id), &app.screenshot(sw, sh))?;
        save(format!("semantic/{}.png", app.id), &wire)?;
        let hpath = root.join(format!("hierarchies/{}.json", app.id));
        fs::write(
            &hpath,
            serde_json::to_string(&app.hierarchy(landscape)).expect("hierarchy serializes"),
        )
        .map_err(|e| IngestError::io(&hpath, e))?;
        ids.push(app.id);
    }
    Ok(ids)
}

fn shade(c: Rgb<u8>, amount: f64, base: Rgb<u8>) -> Rgb<u8> {
    Rgb(std::array::from_fn(|i| {
        (base[i] as f64 * (1.0 - amount) + c[i] as f64 * amount).round() as u8
    }))
}

fn fill(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for y in y0.max(0)..y1.min(h) {
        for x in x0.max(0)..x1.min(w) {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

fn rounded(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, r: i64, c: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for y in y0.max(0)..y1.min(h) {
        for x in x0.max(0)..x1.min(w) {
            let dx = (x0 + r - x).max(x - (x1 - 1 - r)).max(0);
            let dy = (y0 + r - y).max(y - (y1 - 1 - r)).max(0);
            if dx * dx + dy * dy <= r * r {
                img.put_pixel(x as u32, y as u32, c);
            }
        }
    }
}

fn disc(img: &mut RgbImage, cx: i64, cy: i64, r: i64, c: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for y in (cy - r).max(0)..(cy + r + 1).min(h) {
        for x in (cx - r).max(0)..(cx + r + 1).min(w) {
            if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                img.put_pixel(x as u32, y as u32, c);
            }
        }
    }
}

fn gradient(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, a: Rgb<u8>, b: Rgb<u8>) {
    let span = (y1 - y0).max(1) as f64;
    for y in y0..y1 {
        let t = (y - y0) as f64 / span;
        fill(img, x0, y, x1, y + 1, shade(b, t, a));
    }
}

fn text_lines(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>, max_lines: i64) {
    let h = y1 - y0;
    let line_h = (h / (2 * max_lines + 1)).clamp(2, 6);
    let lines = (h / (2 * line_h)).clamp(1, max_lines);
    let top = y0 + (h - (2 * lines - 1) * line_h) / 2;
    for i in 0..lines {
        let y = top + 2 * i * line_h;
        let end = if i == lines - 1 && lines > 1 { x0 + (x1 - x0) * 2 / 3 } else { x1 };
        fill(img, x0, y, end, y + line_h, c);
    }
}
