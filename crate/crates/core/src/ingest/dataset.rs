use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{
    preprocess_record, IngestError, PreprocessOptions, Preprocessed, RejectReason, RicoRecord,
    TrainingRecord,
};
use crate::layout::Layout;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const STATS_FILE: &str = "stats.json";

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub out_dir: PathBuf,
    pub preprocess: PreprocessOptions,
}

/// One line of `manifest.jsonl`. Image paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    pub conditioning: String,
    pub caption: String,
    pub source_id: String,
    /// Parsed layout, used to train the layout model from the same manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub kept: usize,
    pub rejected: usize,
    pub rejected_by_reason: BTreeMap<RejectReason, usize>,
    pub category_histogram: BTreeMap<String, usize>,
    pub total_elements: usize,
    pub unknown_labels: BTreeMap<String, usize>,
}

/// Loaded form of a manifest entry.
pub type TrainingSample = TrainingRecord;

/// Preprocesses every record (in parallel), then writes the PNGs, one manifest
/// line per kept record in input order, and `stats.json`.
pub fn build_training_set(
    records: &[RicoRecord],
    cfg: &DatasetConfig,
) -> Result<DatasetStats, IngestError> {
    let screens = cfg.out_dir.join("images").join("screens");
    let wires = cfg.out_dir.join("images").join("wireframes");
    for dir in [&screens, &wires] {
        fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    }
    if records.is_empty() {
        warn!("no input records; writing an empty manifest");
    }

    let outcomes: Vec<Result<Preprocessed, IngestError>> = records
        .par_iter()
        .map(|rec| preprocess_record(rec, &cfg.preprocess))
        .collect();

    let manifest_path = cfg.out_dir.join(MANIFEST_FILE);
    let file = File::create(&manifest_path).map_err(|e| IngestError::io(&manifest_path, e))?;
    let mut writer = BufWriter::new(file);
    let mut stats = DatasetStats::default();

    for (rec, outcome) in records.iter().zip(outcomes) {
        let reason = match outcome {
            Ok(Preprocessed::Kept(tr)) => {
                let image = format!("images/screens/{}.png", rec.id);
                let conditioning = format!("images/wireframes/{}.png", rec.id);
                for (rel, img) in [(&image, &tr.image), (&conditioning, &tr.conditioning)] {
                    let path = cfg.out_dir.join(rel);
                    img.save(&path).map_err(|e| {
                        IngestError::io(&path, std::io::Error::other(e.to_string()))
                    })?;
                }
                for el in &tr.layout.elements {
                    *stats
                        .category_histogram
                        .entry(el.category.name().to_string())
                        .or_default() += 1;
                }
                stats.total_elements += tr.layout.len();
                let entry = ManifestEntry {
                    image,
                    conditioning,
                    caption: tr.caption,
                    source_id: tr.source_id,
                    layout: Some(tr.layout),
                };
                let line = serde_json::to_string(&entry).expect("manifest entry serializes");
                writeln!(writer, "{line}").map_err(|e| IngestError::io(&manifest_path, e))?;
                stats.kept += 1;
                if let Ok(parsed) = super::parse_hierarchy(rec) {
                    for (label, n) in parsed.unknown_labels {
                        *stats.unknown_labels.entry(label).or_default() += n;
                    }
                }
                continue;
            }
            Ok(Preprocessed::Rejected(reason)) => reason,
            Err(IngestError::CorruptImage { path, reason }) => {
                warn!(id = %rec.id, path = %path.display(), %reason, "corrupt image");
                RejectReason::CorruptImage
            }
            Err(e @ IngestError::DimensionMismatch { .. }) => {
                warn!(id = %rec.id, "{e}");
                RejectReason::DimensionMismatch
            }
            Err(e @ IngestError::MalformedHierarchy { .. }) => {
                warn!(id = %rec.id, "{e}");
                RejectReason::MalformedHierarchy
            }
            Err(e) => return Err(e),
        };
        stats.rejected += 1;
        *stats.rejected_by_reason.entry(reason).or_default() += 1;
    }
    writer
        .flush()
        .map_err(|e| IngestError::io(&manifest_path, e))?;

    let stats_path = cfg.out_dir.join(STATS_FILE);
    fs::write(
        &stats_path,
        serde_json::to_string_pretty(&stats).expect("stats serialize"),
    )
    .map_err(|e| IngestError::io(&stats_path, e))?;
    Ok(stats)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| IngestError::Manifest {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

impl ManifestEntry {
    /// Reads both images, resolving paths against `base` (the manifest's
    /// directory).
    pub fn load(&self, base: &Path) -> Result<TrainingSample, IngestError> {
        let open = |rel: &str| {
            let path = base.join(rel);
            image::open(&path)
                .map(|i| i.to_rgb8())
                .map_err(|e| IngestError::CorruptImage {
                    path,
                    reason: e.to_string(),
                })
        };
        Ok(TrainingRecord {
            image: open(&self.image)?,
            conditioning: open(&self.conditioning)?,
            caption: self.caption.clone(),
            source_id: self.source_id.clone(),
            layout: self.layout.clone().unwrap_or_else(Layout::default_canvas),
        })
    }
}

/// Reads a manifest and loads every record it lists.
pub fn load_manifest_records(path: &Path) -> Result<Vec<TrainingSample>, IngestError> {
    let base = path.parent().unwrap_or(Path::new("."));
    read_manifest(path)?
        .iter()
        .map(|e| e.load(base))
        .collect()
}
