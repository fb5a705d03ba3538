use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::coverage::component_coverage;
use super::scorer::CompatibilityScorer;
use super::EvalError;
use crate::layout::{
    layout_metrics, ComponentCategory, ComponentCondition, Layout, LayoutMetrics,
};

/// What was asked for: a prompt and a component multiset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub id: String,
    pub prompt: String,
    #[serde(default)]
    pub condition: ComponentCondition,
}

/// What came back. `image` is resolved against the results file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub id: String,
    #[serde(default)]
    pub image: Option<PathBuf>,
    pub layout: Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: String,
    pub compatibility: Option<f64>,
    pub requested: ComponentCondition,
    pub recall: f64,
    pub missing: ComponentCondition,
    pub extra: ComponentCondition,
    pub metrics: LayoutMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
}

impl Stat {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let variance = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            n: v.len(),
            mean,
            variance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub samples: usize,
    pub compatibility: Option<Stat>,
    pub recall: Option<Stat>,
    pub overlap: Option<Stat>,
    pub alignment: Option<Stat>,
    pub coverage: Option<Stat>,
}

impl Aggregate {
    pub fn from_rows(rows: &[SampleRow]) -> Self {
        Self {
            samples: rows.len(),
            compatibility: Stat::of(rows.iter().filter_map(|r| r.compatibility)),
            recall: Stat::of(rows.iter().map(|r| r.recall)),
            overlap: Stat::of(rows.iter().map(|r| r.metrics.overlap)),
            alignment: Stat::of(rows.iter().map(|r| r.metrics.alignment)),
            coverage: Stat::of(rows.iter().map(|r| r.metrics.coverage)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCoverage {
    pub category: ComponentCategory,
    pub requested: usize,
    pub matched: usize,
    pub missing: usize,
    pub extra: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub backend: Option<String>,
    pub weight: Option<f64>,
    pub rows: Vec<SampleRow>,
    pub aggregate: Aggregate,
    pub coverage_table: Vec<CategoryCoverage>,
}

impl EvalReport {
    /// True when the stored aggregates and table match a recomputation from
    /// the rows.
    pub fn is_consistent(&self) -> bool {
        self.aggregate == Aggregate::from_rows(&self.rows)
            && self.coverage_table == coverage_table(&self.rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let fmt = |s: &Option<Stat>| match s {
            Some(s) => format!("{:.4} (var {:.4}, n={})", s.mean, s.variance, s.n),
            None => "-".to_string(),
        };
        let a = &self.aggregate;
        let _ = writeln!(out, "samples        {}", a.samples);
        let _ = writeln!(out, "compatibility  {}", fmt(&a.compatibility));
        let _ = writeln!(out, "recall         {}", fmt(&a.recall));
        let _ = writeln!(out, "overlap        {}", fmt(&a.overlap));
        let _ = writeln!(out, "alignment      {}", fmt(&a.alignment));
        let _ = writeln!(out, "coverage       {}", fmt(&a.coverage));
        if !self.coverage_table.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "{:<20} {:>9} {:>8} {:>8} {:>6}",
                "category", "requested", "matched", "missing", "extra"
            );
            for c in &self.coverage_table {
                let _ = writeln!(
                    out,
                    "{:<20} {:>9} {:>8} {:>8} {:>6}",
                    c.category.name(),
                    c.requested,
                    c.matched,
                    c.missing,
                    c.extra
                );
            }
        }
        if !self.rows.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<24} {:>8} {:>7} {:>8} {:>9} {:>8}", "id", "compat", "recall", "overlap", "alignment", "coverage");
            for r in &self.rows {
                let compat = r.compatibility.map_or("-".to_string(), |c| format!("{c:.4}"));
                let _ = writeln!(
                    out,
                    "{:<24} {:>8} {:>7.3} {:>8.4} {:>9.4} {:>8.4}",
                    r.id, compat, r.recall, r.metrics.overlap, r.metrics.alignment, r.metrics.coverage
                );
            }
        }
        out
    }
}

fn coverage_table(rows: &[SampleRow]) -> Vec<CategoryCoverage> {
    let mut table: BTreeMap<ComponentCategory, CategoryCoverage> = BTreeMap::new();
    let mut add = |c: ComponentCategory, f: &dyn Fn(&mut CategoryCoverage)| {
        f(table.entry(c).or_insert(CategoryCoverage {
            category: c,
            requested: 0,
            matched: 0,
            missing: 0,
            extra: 0,
        }))
    };
    for r in rows {
        for (c, n) in r.requested.iter() {
            let miss = r.missing.count(c);
            add(c, &|e| {
                e.requested += n;
                e.matched += n - miss;
                e.missing += miss;
            });
        }
        for (c, n) in r.extra.iter() {
            add(c, &|e| e.extra += n);
        }
    }
    table.into_values().collect()
}

/// Scores every request against the result with the same id. Rows come out
/// in request order.
pub fn evaluate_batch(
    requests: &[EvalRequest],
    results: &[EvalResult],
    scorer: Option<&CompatibilityScorer>,
    image_root: &Path,
) -> Result<EvalReport, EvalError> {
    let mut by_id: HashMap<&str, &EvalResult> = HashMap::new();
    for r in results {
        if by_id.insert(&r.id, r).is_some() {
            return Err(EvalError::IdMismatch(format!("duplicate result id {:?}", r.id)));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for q in requests {
        if !seen.insert(q.id.as_str()) {
            return Err(EvalError::IdMismatch(format!("duplicate request id {:?}", q.id)));
        }
        if !by_id.contains_key(q.id.as_str()) {
            return Err(EvalError::IdMismatch(format!("no result for request {:?}", q.id)));
        }
    }
    if let Some(extra) = results.iter().find(|r| !seen.contains(r.id.as_str())) {
        return Err(EvalError::IdMismatch(format!("result {:?} has no request", extra.id)));
    }

    let rows = requests
        .par_iter()
        .map(|q| {
            let res = by_id[q.id.as_str()];
            let compatibility = match (scorer, &res.image) {
                (Some(s), Some(p)) => {
                    let path = image_root.join(p);
                    let img = image::open(&path)
                        .map_err(|e| EvalError::Image {
                            path: path.clone(),
                            reason: e.to_string(),
                        })?
                        .to_rgb8();
                    Some(s.score(&img, &q.prompt)?)
                }
                _ => None,
            };
            let cov = component_coverage(&q.condition, &res.layout);
            Ok(SampleRow {
                id: q.id.clone(),
                compatibility,
                requested: q.condition.clone(),
                recall: cov.recall,
                missing: cov.missing,
                extra: cov.extra,
                metrics: layout_metrics(&res.layout),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    Ok(EvalReport {
        backend: scorer.map(|s| s.backend_name().to_string()),
        weight: scorer.map(|s| s.weight),
        aggregate: Aggregate::from_rows(&rows),
        coverage_table: coverage_table(&rows),
        rows,
    })
}

/// One JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::FixedBackend;
    use crate::layout::BBox;

    fn result(id: &str, cats: &[ComponentCategory]) -> EvalResult {
        EvalResult {
            id: id.into(),
            image: None,
            layout: Layout::with_elements(
                288,
                512,
                cats.iter()
                    .enumerate()
                    .map(|(i, &c)| (c, BBox::new(0.0, i as f64 * 0.1, 0.5, 0.1))),
            ),
        }
    }

    fn request(id: &str, cond: &str) -> EvalRequest {
        EvalRequest {
            id: id.into(),
            prompt: "a screen".into(),
            condition: cond.parse().unwrap(),
        }
    }

    #[test]
    fn empty_batch() {
        let r = evaluate_batch(&[], &[], None, Path::new(".")).unwrap();
        assert!(r.rows.is_empty());
        assert_eq!(r.aggregate.samples, 0);
        assert_eq!(r.aggregate.recall, None);
        assert!(r.is_consistent());
    }

    #[test]
    fn mean_recall_of_three() {
        use ComponentCategory as C;
        let reqs = [
            request("a", "toolbar:1"),
            request("b", "text button:2"),
            request("c", "advertisement:1"),
        ];
        let res = [
            result("c", &[C::TOOLBAR]),
            result("a", &[C::TOOLBAR, C::TEXT]),
            result("b", &[C::TEXT_BUTTON]),
        ];
        let r = evaluate_batch(&reqs, &res, None, Path::new(".")).unwrap();
        let ids: Vec<_> = r.rows.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let recall = r.aggregate.recall.unwrap();
        assert!((recall.mean - 0.5).abs() < 1e-12);
        let expected_var = ((0.5f64).powi(2) + 0.0 + (0.5f64).powi(2)) / 3.0;
        assert!((recall.variance - expected_var).abs() < 1e-12);
        let ad = r.coverage_table.iter().find(|c| c.category == C::ADVERTISEMENT).unwrap();
        assert_eq!((ad.requested, ad.matched, ad.missing), (1, 0, 1));
        let tb = r.coverage_table.iter().find(|c| c.category == C::TEXT_BUTTON).unwrap();
        assert_eq!((tb.requested, tb.matched, tb.missing), (2, 1, 1));
        assert!(r.is_consistent());
        assert!(r.to_table().contains("advertisement"));
    }

    #[test]
    fn compatibility_mean_with_images() {
        let dir = tempfile::tempdir().unwrap();
        image::RgbImage::new(4, 4).save(dir.path().join("x.png")).unwrap();
        let scorer = CompatibilityScorer::new(Box::new(FixedBackend {
            image: vec![1.0, 0.0],
            text: vec![1.0, 1.0],
        }));
        let reqs = [request("a", ""), request("b", "")];
        let mut res = [result("a", &[]), result("b", &[])];
        res[0].image = Some("x.png".into());
        let r = evaluate_batch(&reqs, &res, Some(&scorer), dir.path()).unwrap();
        let c = r.aggregate.compatibility.unwrap();
        assert_eq!(c.n, 1);
        assert!((c.mean - 2.5 / 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(r.rows[1].compatibility, None);
    }

    #[test]
    fn report_round_trip() {
        use ComponentCategory as C;
        let reqs = [request("a", "toolbar:1, icon:2"), request("b", "text")];
        let res = [result("a", &[C::ICON, C::TOOLBAR]), result("b", &[C::CARD])];
        let r = evaluate_batch(&reqs, &res, None, Path::new(".")).unwrap();
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn id_mismatch() {
        let e = evaluate_batch(&[request("a", "")], &[result("b", &[])], None, Path::new("."));
        assert!(matches!(e, Err(EvalError::IdMismatch(_))));
        let e = evaluate_batch(&[], &[result("b", &[])], None, Path::new("."));
        assert!(matches!(e, Err(EvalError::IdMismatch(_))));
        let e = evaluate_batch(
            &[request("a", ""), request("a", "")],
            &[result("a", &[])],
            None,
            Path::new("."),
        );
        assert!(matches!(e, Err(EvalError::IdMismatch(_))));
    }
}
