use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RicoRecord;
use crate::layout::{ComponentCategory, Layout};

/// Replacement prompt used for dropped captions and for empty layouts.
pub const DEFAULT_PROMPT: &str = "A nice screenshot of a mobile app";

const MAX_COMPONENT_SENTENCES: usize = 3;

/// Sentence templates in the style of the XUI screen describer.
///
/// `screens` is keyed by screen kind; `components` by category name, each
/// template may use `{name}` and `{area}` (top / center / bottom).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionTemplateSet {
    pub screens: BTreeMap<String, Vec<String>>,
    /// Used for kinds without their own entry; `{kind}` is substituted.
    pub generic_screen: Vec<String>,
    pub components: BTreeMap<String, Vec<String>>,
}

impl Default for CaptionTemplateSet {
    fn default() -> Self {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut screens = BTreeMap::new();
        screens.insert(
            "list".to_string(),
            owned(&[
                "That screen maybe is a list screen. You may see a list of elements, typically arranged in rows.",
                "That screen maybe is a list screen. You may see several items stacked in rows.",
            ]),
        );
        screens.insert(
            "login".to_string(),
            owned(&[
                "That screen maybe is a login screen. You may see input fields to enter credentials.",
                "That screen maybe is a login screen. You may see a form with a button to sign in.",
            ]),
        );
        screens.insert(
            "map".to_string(),
            owned(&["That screen maybe is a map screen. You may see a map covering most of the screen."]),
        );
        screens.insert(
            "gallery".to_string(),
            owned(&["That screen maybe is a gallery screen. You may see a collection of pictures."]),
        );
        screens.insert(
            "media player".to_string(),
            owned(&["That screen maybe is a media player screen. You may see playback content and controls."]),
        );
        let generic_screen = owned(&[
            "That screen maybe is a {kind} screen.",
            "That screen maybe is a {kind} screen. You may see its main content in the middle.",
        ]);
        let mut components = BTreeMap::new();
        for c in ComponentCategory::all() {
            components.insert(
                c.name().to_string(),
                owned(&[
                    "You may notice a {name} ubicated at the {area} area.",
                    "You may see a {name} at the {area} area.",
                ]),
            );
        }
        components.insert(
            ComponentCategory::INPUT.name().to_string(),
            owned(&[
                "You may notice an input field ubicated at the {area} area.",
                "You may see an input field at the {area} area.",
            ]),
        );
        components.insert(
            ComponentCategory::ADVERTISEMENT.name().to_string(),
            owned(&[
                "You may notice an advertisement ubicated at the {area} area.",
                "You may see an advertisement at the {area} area.",
            ]),
        );
        components.insert(
            ComponentCategory::ICON.name().to_string(),
            owned(&[
                "You may notice an icon ubicated at the {area} area.",
                "You may see an icon at the {area} area.",
            ]),
        );
        Self {
            screens,
            generic_screen,
            components,
        }
    }
}

/// Screen kind from the layout: three or more list items make a list screen,
/// an input plus a text button a login screen; otherwise the largest
/// element's category decides. `None` for an empty layout.
pub fn screen_kind(layout: &Layout) -> Option<&'static str> {
    let count = |c: ComponentCategory| layout.elements.iter().filter(|e| e.category == c).count();
    if count(ComponentCategory::LIST_ITEM) >= 3 {
        return Some("list");
    }
    if count(ComponentCategory::INPUT) > 0 && count(ComponentCategory::TEXT_BUTTON) > 0 {
        return Some("login");
    }
    let largest = layout
        .elements
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.bbox.area().total_cmp(&b.bbox.area()).then(j.cmp(i)))?
        .1;
    Some(kind_for(largest.category))
}

fn kind_for(category: ComponentCategory) -> &'static str {
    use ComponentCategory as C;
    match category {
        C::MAP_VIEW => "map",
        C::VIDEO => "media player",
        C::IMAGE | C::BACKGROUND_IMAGE => "gallery",
        C::WEB_VIEW => "web page",
        C::LIST_ITEM => "list",
        C::INPUT => "form",
        C::MODAL => "dialog",
        C::DRAWER => "menu",
        C::DATE_PICKER => "calendar",
        C::CARD => "feed",
        C::ADVERTISEMENT => "promotion",
        C::TEXT => "text",
        C::ON_OFF_SWITCH | C::CHECKBOX | C::RADIO_BUTTON => "settings",
        C::MULTI_TAB | C::PAGER_INDICATOR => "tabbed",
        _ => "home",
    }
}

fn area_name(center_y: f64) -> &'static str {
    if center_y < 1.0 / 3.0 {
        "top"
    } else if center_y < 2.0 / 3.0 {
        "center"
    } else {
        "bottom"
    }
}

fn record_salt(id: &str) -> u64 {
    // FNV-1a
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &'a [String]) -> Option<&'a String> {
    if options.is_empty() {
        None
    } else {
        Some(&options[rng.random_range(0..options.len())])
    }
}

/// A screen-type sentence followed by up to three component sentences, one
/// per distinct category in decreasing area order. Deterministic in
/// `(rec.id, layout, templates, seed)`.
pub fn generate_caption(
    rec: &RicoRecord,
    layout: &Layout,
    templates: &CaptionTemplateSet,
    seed: u64,
) -> String {
    caption_for_id(&rec.id, layout, templates, seed)
}

pub(crate) fn caption_for_id(
    id: &str,
    layout: &Layout,
    templates: &CaptionTemplateSet,
    seed: u64,
) -> String {
    let Some(kind) = screen_kind(layout) else {
        return DEFAULT_PROMPT.to_string();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ record_salt(id));
    let mut sentences = Vec::new();
    let screen = match templates.screens.get(kind) {
        Some(options) => pick(&mut rng, options).cloned(),
        None => pick(&mut rng, &templates.generic_screen).map(|t| t.replace("{kind}", kind)),
    };
    sentences.extend(screen);

    let mut by_area: Vec<usize> = (0..layout.elements.len()).collect();
    by_area.sort_by(|&a, &b| {
        layout.elements[b]
            .bbox
            .area()
            .total_cmp(&layout.elements[a].bbox.area())
            .then(a.cmp(&b))
    });
    let mut used = Vec::new();
    for i in by_area {
        let el = &layout.elements[i];
        if used.contains(&el.category) {
            continue;
        }
        used.push(el.category);
        if let Some(t) = templates
            .components
            .get(el.category.name())
            .and_then(|options| pick(&mut rng, options))
        {
            sentences.push(
                t.replace("{name}", el.category.name())
                    .replace("{area}", area_name(el.bbox.center().1)),
            );
        }
        if used.len() == MAX_COMPONENT_SENTENCES {
            break;
        }
    }
    if sentences.is_empty() {
        DEFAULT_PROMPT.to_string()
    } else {
        sentences.join(" ")
    }
}

/// With probability `p` the default prompt, otherwise `caption` unchanged.
/// Consumes exactly one draw from `rng`.
pub fn apply_prompt_dropout<R: Rng + ?Sized>(caption: &str, p: f64, rng: &mut R) -> String {
    debug_assert!((0.0..=1.0).contains(&p), "dropout probability {p}");
    let draw: f64 = rng.random();
    if draw < p {
        DEFAULT_PROMPT.to_string()
    } else {
        caption.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::BBox;
    use std::path::PathBuf;

    fn rec(id: &str) -> RicoRecord {
        RicoRecord {
            id: id.into(),
            screenshot: PathBuf::new(),
            wireframe: PathBuf::new(),
            hierarchy: Default::default(),
        }
    }

    fn list_layout() -> Layout {
        let mut l = Layout::default_canvas();
        for i in 0..4 {
            l.push(
                ComponentCategory::LIST_ITEM,
                BBox::new(0.0, 0.1 + i as f64 * 0.1, 1.0, 0.1),
            );
        }
        l.push(ComponentCategory::TEXT, BBox::new(0.3, 0.45, 0.4, 0.05));
        l
    }

    #[test]
    fn list_screen_caption() {
        let t = CaptionTemplateSet::default();
        let c = generate_caption(&rec("a"), &list_layout(), &t, 3);
        assert!(c.starts_with("That screen maybe is a list screen."), "{c}");
        assert!(c.contains("text ubicated at the center area") || c.contains("text at the center area"), "{c}");
    }

    #[test]
    fn login_screen_kind() {
        let l = Layout::with_elements(
            288,
            512,
            [
                (ComponentCategory::INPUT, BBox::new(0.1, 0.3, 0.8, 0.07)),
                (ComponentCategory::TEXT_BUTTON, BBox::new(0.1, 0.5, 0.8, 0.07)),
            ],
        );
        assert_eq!(screen_kind(&l), Some("login"));
    }

    #[test]
    fn largest_element_drives_kind() {
        let l = Layout::with_elements(
            288,
            512,
            [
                (ComponentCategory::TOOLBAR, BBox::new(0.0, 0.0, 1.0, 0.1)),
                (ComponentCategory::MAP_VIEW, BBox::new(0.0, 0.1, 1.0, 0.8)),
            ],
        );
        assert_eq!(screen_kind(&l), Some("map"));
        let c = generate_caption(&rec("m"), &l, &CaptionTemplateSet::default(), 0);
        assert!(c.starts_with("That screen maybe is a map screen."));
    }

    #[test]
    fn empty_layout_falls_back() {
        let c = generate_caption(&rec("e"), &Layout::default_canvas(), &CaptionTemplateSet::default(), 1);
        assert_eq!(c, DEFAULT_PROMPT);
    }

    #[test]
    fn at_most_three_component_sentences() {
        let l = Layout::with_elements(
            288,
            512,
            ComponentCategory::all()
                .take(6)
                .enumerate()
                .map(|(i, c)| (c, BBox::new(0.0, i as f64 * 0.15, 0.5, 0.1))),
        );
        let c = generate_caption(&rec("x"), &l, &CaptionTemplateSet::default(), 9);
        let component_sentences = c.matches(" area.").count();
        assert_eq!(component_sentences, 3, "{c}");
    }

    #[test]
    fn deterministic_given_seed() {
        let t = CaptionTemplateSet::default();
        let a = generate_caption(&rec("a"), &list_layout(), &t, 7);
        let b = generate_caption(&rec("a"), &list_layout(), &t, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(apply_prompt_dropout("caption", 0.0, &mut rng), "caption");
        assert_eq!(apply_prompt_dropout("caption", 1.0, &mut rng), DEFAULT_PROMPT);
    }

    #[test]
    fn dropout_consumes_one_draw() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        apply_prompt_dropout("c", 0.5, &mut a);
        let _: f64 = b.random();
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn dropout_rate_at_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let replaced = (0..n)
            .filter(|_| apply_prompt_dropout("c", 0.5, &mut rng) == DEFAULT_PROMPT)
            .count();
        let frac = replaced as f64 / n as f64;
        assert!((0.49..=0.51).contains(&frac), "{frac}");
        // 3 sigma binomial band around N/2
        let band = 3.0 * (n as f64 * 0.25).sqrt();
        assert!((replaced as f64 - n as f64 / 2.0).abs() <= band);
    }
}
