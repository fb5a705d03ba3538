use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::layout::{BBox, ComponentCategory, Layout, DEFAULT_E_MAX};

/// Guards against pathological nesting (a stand-in for cycle detection, which
/// a JSON tree cannot express).
const MAX_DEPTH: usize = 256;

/// One node of a Rico view hierarchy / semantic annotation tree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HierarchyNode {
    /// `[left, top, right, bottom]` in absolute pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 4]>,
    #[serde(
        default,
        rename = "componentLabel",
        skip_serializing_if = "Option::is_none"
    )]
    pub component_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<HierarchyNode>,
}

impl HierarchyNode {
    pub fn labeled(label: &str, bounds: [f64; 4]) -> Self {
        Self {
            bounds: Some(bounds),
            component_label: Some(label.to_string()),
            ..Default::default()
        }
    }

    /// Accepts either a bare node or Rico's raw `{"activity": {"root": …}}`
    /// wrapper.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let root = match value.pointer("/activity/root") {
            Some(root) => root.clone(),
            None => value,
        };
        serde_json::from_value(root)
    }
}

/// Source files of one Rico screen plus its parsed hierarchy.
#[derive(Debug, Clone)]
pub struct RicoRecord {
    pub id: String,
    pub screenshot: PathBuf,
    pub wireframe: PathBuf,
    pub hierarchy: HierarchyNode,
}

impl RicoRecord {
    /// Loads `<root>/hierarchies/<id>.json` and points at
    /// `<root>/combined/<id>.jpg` and `<root>/semantic/<id>.png`.
    pub fn load(root: &Path, id: &str) -> Result<Self, IngestError> {
        let hpath = root.join("hierarchies").join(format!("{id}.json"));
        let text = fs::read_to_string(&hpath).map_err(|e| IngestError::io(&hpath, e))?;
        let hierarchy =
            HierarchyNode::from_json(&text).map_err(|e| IngestError::MalformedHierarchy {
                id: id.to_string(),
                reason: e.to_string(),
            })?;
        let mut screenshot = root.join("combined").join(format!("{id}.jpg"));
        if !screenshot.exists() {
            let png = root.join("combined").join(format!("{id}.png"));
            if png.exists() {
                screenshot = png;
            }
        }
        Ok(Self {
            id: id.to_string(),
            screenshot,
            wireframe: root.join("semantic").join(format!("{id}.png")),
            hierarchy,
        })
    }
}

/// Loads every record with a hierarchy file, sorted by id. Records whose
/// hierarchy cannot be read are returned separately.
pub fn load_rico_dir(root: &Path) -> Result<(Vec<RicoRecord>, Vec<(String, IngestError)>), IngestError> {
    let dir = root.join("hierarchies");
    let mut ids: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| IngestError::io(&dir, e))?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            (path.extension()? == "json").then(|| path.file_stem()?.to_str().map(String::from))?
        })
        .collect();
    ids.sort();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for id in ids {
        match RicoRecord::load(root, &id) {
            Ok(r) => records.push(r),
            Err(e) => failures.push((id, e)),
        }
    }
    Ok((records, failures))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedHierarchy {
    pub layout: Layout,
    /// Labels that are not in the 25-category vocabulary, with counts.
    pub unknown_labels: BTreeMap<String, usize>,
    /// Labeled nodes with zero area after clipping to the root.
    pub degenerate: usize,
    /// Smallest elements removed to respect `e_max`.
    pub dropped_over_capacity: usize,
}

impl ParsedHierarchy {
    pub fn skipped(&self) -> usize {
        self.unknown_labels.values().sum()
    }
}

/// Flattens every node carrying a recognized label (at any depth) into a
/// layout element, normalized by the root bounds, in depth-first order.
pub fn parse_hierarchy(rec: &RicoRecord) -> Result<ParsedHierarchy, IngestError> {
    parse_hierarchy_with(rec, DEFAULT_E_MAX)
}

pub fn parse_hierarchy_with(rec: &RicoRecord, e_max: usize) -> Result<ParsedHierarchy, IngestError> {
    let malformed = |reason: String| IngestError::MalformedHierarchy {
        id: rec.id.clone(),
        reason,
    };
    let root = rec
        .hierarchy
        .bounds
        .ok_or_else(|| malformed("root has no bounds".into()))?;
    let (rw, rh) = (root[2] - root[0], root[3] - root[1]);
    if !(rw > 0.0 && rh > 0.0) {
        return Err(malformed(format!("root bounds {root:?} are empty")));
    }

    let mut found: Vec<(ComponentCategory, BBox)> = Vec::new();
    let mut unknown_labels = BTreeMap::new();
    let mut degenerate = 0;
    let mut stack: Vec<(&HierarchyNode, usize)> = vec![(&rec.hierarchy, 0)];
    while let Some((node, depth)) = stack.pop() {
        if depth > MAX_DEPTH {
            return Err(malformed(format!("nesting deeper than {MAX_DEPTH}")));
        }
        if let Some(label) = &node.component_label {
            match ComponentCategory::from_name(label) {
                Some(category) => {
                    let b = node
                        .bounds
                        .ok_or_else(|| malformed(format!("{label:?} node has no bounds")))?;
                    if b.iter().any(|v| !v.is_finite()) {
                        return Err(malformed(format!("non-finite bounds {b:?}")));
                    }
                    let x0 = ((b[0] - root[0]) / rw).clamp(0.0, 1.0);
                    let y0 = ((b[1] - root[1]) / rh).clamp(0.0, 1.0);
                    let x1 = ((b[2] - root[0]) / rw).clamp(0.0, 1.0);
                    let y1 = ((b[3] - root[1]) / rh).clamp(0.0, 1.0);
                    if x1 > x0 && y1 > y0 {
                        found.push((category, BBox::new(x0, y0, x1 - x0, y1 - y0)));
                    } else {
                        degenerate += 1;
                    }
                }
                None => *unknown_labels.entry(label.clone()).or_insert(0) += 1,
            }
        }
        // reversed so the first child is visited first
        for child in node.children.iter().rev() {
            stack.push((child, depth + 1));
        }
    }

    let dropped_over_capacity = found.len().saturating_sub(e_max);
    if dropped_over_capacity > 0 {
        let mut order: Vec<usize> = (0..found.len()).collect();
        order.sort_by(|&a, &b| {
            found[b]
                .1
                .area()
                .total_cmp(&found[a].1.area())
                .then(a.cmp(&b))
        });
        let mut keep = vec![false; found.len()];
        for &i in order.iter().take(e_max) {
            keep[i] = true;
        }
        found = found
            .into_iter()
            .zip(keep)
            .filter_map(|(f, k)| k.then_some(f))
            .collect();
    }

    // Canvas follows the root aspect; 288-wide keeps landscape detection intact.
    let canvas_h = (288.0 * rh / rw).round().max(1.0) as u32;
    Ok(ParsedHierarchy {
        layout: Layout::with_elements(288, canvas_h, found),
        unknown_labels,
        degenerate,
        dropped_over_capacity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(h: HierarchyNode) -> RicoRecord {
        RicoRecord {
            id: "t".into(),
            screenshot: PathBuf::new(),
            wireframe: PathBuf::new(),
            hierarchy: h,
        }
    }

    fn root(children: Vec<HierarchyNode>) -> HierarchyNode {
        HierarchyNode {
            bounds: Some([0.0, 0.0, 1440.0, 2560.0]),
            children,
            ..Default::default()
        }
    }

    #[test]
    fn single_full_screen_toolbar() {
        let h = root(vec![HierarchyNode::labeled("Toolbar", [0.0, 0.0, 1440.0, 2560.0])]);
        let p = parse_hierarchy(&record(h)).unwrap();
        assert_eq!(p.layout.elements.len(), 1);
        assert_eq!(p.layout.elements[0].category, ComponentCategory::TOOLBAR);
        assert_eq!(p.layout.elements[0].bbox, BBox::FULL);
        assert_eq!((p.layout.canvas_w, p.layout.canvas_h), (288, 512));
    }

    #[test]
    fn normalizes_by_root_bounds() {
        let h = root(vec![HierarchyNode::labeled("Image", [0.0, 0.0, 720.0, 960.0])]);
        let p = parse_hierarchy(&record(h)).unwrap();
        // 720/1440 = 0.5, 960/2560 = 0.375
        assert_eq!(p.layout.elements[0].bbox, BBox::new(0.0, 0.0, 0.5, 0.375));
    }

    #[test]
    fn unknown_labels_are_skipped_and_counted() {
        let h = root(vec![
            HierarchyNode::labeled("Spinner", [0.0, 0.0, 100.0, 100.0]),
            HierarchyNode::labeled("Icon", [0.0, 0.0, 100.0, 100.0]),
        ]);
        let p = parse_hierarchy(&record(h)).unwrap();
        assert_eq!(p.layout.len(), 1);
        assert_eq!(p.skipped(), 1);
        assert_eq!(p.unknown_labels.get("Spinner"), Some(&1));
    }

    #[test]
    fn depth_first_order_and_clipping() {
        let mut item = HierarchyNode::labeled("List Item", [0.0, 200.0, 1440.0, 400.0]);
        item.children = vec![
            HierarchyNode::labeled("Icon", [20.0, 220.0, 120.0, 380.0]),
            HierarchyNode::labeled("Text", [140.0, 220.0, 1600.0, 380.0]),
        ];
        let h = root(vec![
            item,
            HierarchyNode::labeled("Text Button", [0.0, 2400.0, 1440.0, 2560.0]),
        ]);
        let p = parse_hierarchy(&record(h)).unwrap();
        let cats: Vec<_> = p.layout.elements.iter().map(|e| e.category).collect();
        assert_eq!(
            cats,
            vec![
                ComponentCategory::LIST_ITEM,
                ComponentCategory::ICON,
                ComponentCategory::TEXT,
                ComponentCategory::TEXT_BUTTON
            ]
        );
        assert_eq!(p.layout.elements[2].bbox.right(), 1.0);
        assert!(p.layout.is_valid());
    }

    #[test]
    fn keeps_largest_elements_over_capacity() {
        let children = (0..25)
            .map(|i| {
                let s = 10.0 * (i + 1) as f64;
                HierarchyNode::labeled("Icon", [0.0, 0.0, s, s])
            })
            .collect();
        let p = parse_hierarchy(&record(root(children))).unwrap();
        assert_eq!(p.layout.len(), 20);
        assert_eq!(p.dropped_over_capacity, 5);
        // the five smallest (first five in DFS order) are gone; order kept
        let first = p.layout.elements[0].bbox.w * 1440.0;
        assert!((first - 60.0).abs() < 1e-9);
        assert!(p.layout.is_valid());
    }

    #[test]
    fn missing_bounds_is_malformed() {
        let mut node = HierarchyNode::labeled("Icon", [0.0; 4]);
        node.bounds = None;
        assert!(matches!(
            parse_hierarchy(&record(root(vec![node]))),
            Err(IngestError::MalformedHierarchy { .. })
        ));
        let mut r = root(vec![]);
        r.bounds = None;
        assert!(parse_hierarchy(&record(r)).is_err());
    }

    #[test]
    fn absurd_nesting_is_malformed() {
        let mut node = HierarchyNode::labeled("Icon", [0.0, 0.0, 10.0, 10.0]);
        for _ in 0..300 {
            node = HierarchyNode {
                bounds: Some([0.0, 0.0, 10.0, 10.0]),
                children: vec![node],
                ..Default::default()
            };
        }
        assert!(parse_hierarchy(&record(root(vec![node]))).is_err());
    }

    #[test]
    fn reads_raw_activity_wrapper() {
        let text = r#"{"activity":{"root":{"bounds":[0,0,1440,2560],"children":[{"bounds":[0,0,1440,200],"componentLabel":"Toolbar"}]}}}"#;
        let h = HierarchyNode::from_json(text).unwrap();
        assert_eq!(h.children.len(), 1);
    }
}
