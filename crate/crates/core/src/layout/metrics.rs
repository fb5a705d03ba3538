use serde::{Deserialize, Serialize};

use super::{BBox, Layout};

/// Geometry-only quality measures; stacking order is ignored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LayoutMetrics {
    /// Sum of pairwise intersection areas over the canvas area.
    pub overlap: f64,
    /// Mean distance from each element's left/center/right x to the nearest
    /// matching coordinate of any other element (lower is better aligned).
    pub alignment: f64,
    /// Area of the union of all boxes over the canvas area.
    pub coverage: f64,
}

pub fn layout_metrics(layout: &Layout) -> LayoutMetrics {
    let boxes: Vec<BBox> = layout.elements.iter().map(|e| e.bbox).collect();
    LayoutMetrics {
        overlap: overlap(&boxes),
        alignment: alignment(&boxes),
        coverage: union_area(&boxes),
    }
}

fn overlap(boxes: &[BBox]) -> f64 {
    let mut total = 0.0;
    for (i, a) in boxes.iter().enumerate() {
        for b in &boxes[i + 1..] {
            total += a.intersection_area(b);
        }
    }
    total
}

fn alignment(boxes: &[BBox]) -> f64 {
    if boxes.len() < 2 {
        return 0.0;
    }
    let anchors = |b: &BBox| [b.x, b.x + b.w / 2.0, b.right()];
    let mut sum = 0.0;
    for (i, a) in boxes.iter().enumerate() {
        let mine = anchors(a);
        let best = boxes
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, b)| {
                let theirs = anchors(b);
                (0..3).map(move |k| (mine[k] - theirs[k]).abs())
            })
            .fold(f64::INFINITY, f64::min);
        sum += best;
    }
    sum / boxes.len() as f64
}

/// Exact union area by coordinate compression; boxes are clipped to the unit
/// canvas first.
fn union_area(boxes: &[BBox]) -> f64 {
    let rects: Vec<[f64; 4]> = boxes
        .iter()
        .map(|b| {
            [
                b.x.clamp(0.0, 1.0),
                b.y.clamp(0.0, 1.0),
                b.right().clamp(0.0, 1.0),
                b.bottom().clamp(0.0, 1.0),
            ]
        })
        .filter(|r| r[2] > r[0] && r[3] > r[1])
        .collect();
    if rects.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r[0], r[2]]).collect();
    let mut ys: Vec<f64> = rects.iter().flat_map(|r| [r[1], r[3]]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut area = 0.0;
    for xw in xs.windows(2) {
        let cx = (xw[0] + xw[1]) / 2.0;
        for yw in ys.windows(2) {
            let cy = (yw[0] + yw[1]) / 2.0;
            if rects
                .iter()
                .any(|r| cx > r[0] && cx < r[2] && cy > r[1] && cy < r[3])
            {
                area += (xw[1] - xw[0]) * (yw[1] - yw[0]);
            }
        }
    }
    area
}
