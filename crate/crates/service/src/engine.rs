//! Blocking pipeline operations behind the HTTP handlers. Each one stores
//! its artifacts first and appends the project metadata last.

use std::io::Cursor;
use std::path::Path;
use std::time::Instant;

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use uidiff_core::eval::{component_coverage, CompatibilityScorer};
use uidiff_core::layout::layout_metrics;
use uidiff_core::postprocess::{crop_components, generate_code};
use uidiff_core::wireframe::{render_wireframe, Palette};
use uidiff_core::{ComponentCondition, Layout, CANVAS_H, CANVAS_W};
use uidiff_models::layout_diffusion::{sample_many, LayoutDenoiser, SampleConfig};
use uidiff_models::ui_diffusion::{generate_ui, UiModel, DEFAULT_STEPS};
use uidiff_models::Device;

use crate::error::ApiError;
use crate::store::{content_hash, new_id, now, ArtifactRef, GenerationResult, ResultKind, Store};

pub struct LoadedLayout {
    pub model: LayoutDenoiser,
    /// sha256 of the checkpoint file.
    pub id: String,
}

pub struct LoadedUi {
    pub model: UiModel,
    pub id: String,
}

/// Immutable model snapshots shared by every request.
pub struct Engine {
    pub layout: Option<LoadedLayout>,
    pub ui: Option<LoadedUi>,
    pub scorer: CompatibilityScorer,
    pub palette: Palette,
}

fn read_id(path: &Path) -> Result<String, ApiError> {
    let bytes = std::fs::read(path)
        .map_err(|e| ApiError::Unavailable(format!("cannot read {}: {e}", path.display())))?;
    Ok(content_hash(&bytes))
}

impl Engine {
    pub fn load(layout_ckpt: Option<&Path>, ui_ckpt: Option<&Path>) -> Result<Self, ApiError> {
        let dev = Device::Cpu;
        let layout = layout_ckpt
            .map(|p| -> Result<_, ApiError> {
                Ok(LoadedLayout {
                    model: LayoutDenoiser::load(p, false, &dev)?,
                    id: read_id(p)?,
                })
            })
            .transpose()?;
        let ui = ui_ckpt
            .map(|p| -> Result<_, ApiError> {
                Ok(LoadedUi {
                    model: UiModel::load(p, &dev)?,
                    id: read_id(p)?,
                })
            })
            .transpose()?;
        Ok(Self {
            layout,
            ui,
            scorer: CompatibilityScorer::from_name("mock").expect("mock backend"),
            palette: Palette::v1(),
        })
    }

    fn layout_model(&self) -> Result<&LoadedLayout, ApiError> {
        self.layout
            .as_ref()
            .ok_or_else(|| ApiError::Unavailable("no layout checkpoint loaded".into()))
    }

    fn ui_model(&self) -> Result<&LoadedUi, ApiError> {
        self.ui
            .as_ref()
            .ok_or_else(|| ApiError::Unavailable("no UI checkpoint loaded".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRequest {
    #[serde(default)]
    pub prompt: String,
    /// `"text button:2, input:2"`; empty for unconditional sampling.
    #[serde(default)]
    pub components: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub n_layouts: usize,
    /// Reverse steps of the layout sampler; every timestep when absent.
    #[serde(default)]
    pub layout_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiRequest {
    /// Id of a layout result in the same project.
    pub layout_id: String,
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "six")]
    pub n_uis_per_layout: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropRequest {
    pub ui_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CodeFormat {
    Xml,
    Html,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeRequest {
    /// A layout result, or a UI result (whose pixels then style the nodes).
    pub source_id: String,
    #[serde(default)]
    pub format: CodeFormat,
}

fn one() -> usize {
    1
}

fn six() -> usize {
    6
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

const MAX_BATCH: usize = 64;

fn check_count(n: usize, what: &str) -> Result<(), ApiError> {
    if n == 0 || n > MAX_BATCH {
        return Err(ApiError::BadRequest(format!("{what} must be between 1 and {MAX_BATCH}")));
    }
    Ok(())
}

pub fn parse_components(s: &str) -> Result<ComponentCondition, ApiError> {
    if s.trim().is_empty() {
        return Ok(ComponentCondition::new());
    }
    s.parse()
        .map_err(|e| ApiError::BadRequest(format!("invalid components: {e}")))
}

impl LayoutRequest {
    /// Checks everything that can be checked before queueing.
    pub fn validate(&self, engine: &Engine) -> Result<ComponentCondition, ApiError> {
        check_count(self.n_layouts, "n_layouts")?;
        let cond = parse_components(&self.components)?;
        let model = &engine.layout_model()?.model;
        if cond.total() > model.cfg.tokenizer.e_max {
            return Err(ApiError::BadRequest(format!(
                "{} components requested, at most {} fit in a layout",
                cond.total(),
                model.cfg.tokenizer.e_max
            )));
        }
        Ok(cond)
    }
}

impl UiRequest {
    pub fn validate(&self, engine: &Engine) -> Result<(), ApiError> {
        check_count(self.n_uis_per_layout, "n_uis_per_layout")?;
        if self.steps == 0 || self.steps > 1000 {
            return Err(ApiError::BadRequest("steps must be between 1 and 1000".into()));
        }
        engine.ui_model()?;
        Ok(())
    }
}

pub fn png_bytes(img: &RgbImage) -> Result<Vec<u8>, ApiError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| ApiError::Internal(format!("png encoding: {e}")))?;
    Ok(buf.into_inner())
}

fn load_png(store: &Store, hash: &str) -> Result<RgbImage, ApiError> {
    let bytes = store.get_artifact(hash)?;
    Ok(image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| ApiError::Internal(format!("artifact {hash}: {e}")))?
        .to_rgb8())
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

fn sample_layouts(engine: &Engine, req: &LayoutRequest, cond: &ComponentCondition) -> Result<Vec<Layout>, ApiError> {
    let loaded = engine.layout_model()?;
    let cond = (!cond.is_empty()).then(|| cond.clone());
    let requests: Vec<_> = (0..req.n_layouts)
        .map(|i| (cond.clone(), req.seed.wrapping_add(i as u64)))
        .collect();
    let cfg = SampleConfig {
        steps: req.layout_steps,
        ..SampleConfig::default()
    };
    Ok(sample_many(&loaded.model, &requests, &cfg)?)
}

/// Samples `n_layouts` layouts with seeds `seed + i`, renders their
/// wireframes and records one result per layout.
pub fn generate_layouts(
    engine: &Engine,
    store: &Store,
    project: &str,
    req: &LayoutRequest,
) -> Result<Vec<GenerationResult>, ApiError> {
    store.get_project(project)?;
    let cond = req.validate(engine)?;
    let start = Instant::now();
    let layouts = sample_layouts(engine, req, &cond)?;
    let per_item = start.elapsed().as_millis() as u64 / layouts.len().max(1) as u64;
    let ckpt = engine.layout_model()?.id.clone();
    let mut results = Vec::with_capacity(layouts.len());
    for (i, layout) in layouts.into_iter().enumerate() {
        let wf = render_wireframe(&layout, &engine.palette, CANVAS_W, CANVAS_H)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        let artifacts = vec![
            store.put_artifact("layout", layout.to_json().as_bytes())?,
            store.put_artifact("wireframe", &png_bytes(&wf)?)?,
        ];
        let coverage = component_coverage(&cond, &layout);
        results.push(GenerationResult {
            id: new_id(),
            kind: ResultKind::Layout,
            created_at: now(),
            request: to_json(req),
            seed: Some(req.seed.wrapping_add(i as u64)),
            checkpoint: Some(ckpt.clone()),
            source: None,
            metrics: Some(serde_json::json!({
                "coverage": to_json(&coverage),
                "layout": to_json(&layout_metrics(&layout)),
            })),
            layout: Some(layout),
            artifacts,
            timings_ms: per_item,
        });
    }
    store.append_results(project, &results)?;
    Ok(results)
}

/// Generates `n_uis_per_layout` images for a stored layout with seeds
/// `seed + i`.
pub fn generate_uis(
    engine: &Engine,
    store: &Store,
    project: &str,
    req: &UiRequest,
) -> Result<Vec<GenerationResult>, ApiError> {
    req.validate(engine)?;
    let p = store.get_project(project)?;
    let source = p
        .result(&req.layout_id)
        .filter(|r| r.kind == ResultKind::Layout)
        .ok_or_else(|| ApiError::NotFound(format!("layout {}", req.layout_id)))?;
    let layout_ref = source
        .artifact("layout")
        .ok_or_else(|| ApiError::Internal("layout result without layout artifact".into()))?
        .clone();
    let layout = load_layout(store, &layout_ref.hash)?;
    let requested: LayoutRequest = serde_json::from_value(source.request.clone())
        .map_err(|e| ApiError::Internal(format!("stored request: {e}")))?;
    let cond = parse_components(&requested.components)?;
    let loaded = engine.ui_model()?;
    let mut results = Vec::with_capacity(req.n_uis_per_layout);
    for i in 0..req.n_uis_per_layout {
        let seed = req.seed.wrapping_add(i as u64);
        let start = Instant::now();
        let img = generate_ui(&loaded.model, &req.prompt, &layout, seed, req.steps)?;
        let ms = start.elapsed().as_millis() as u64;
        let compat = engine.scorer.score(&img, &req.prompt).ok();
        let coverage = component_coverage(&cond, &layout);
        results.push(GenerationResult {
            id: new_id(),
            kind: ResultKind::Ui,
            created_at: now(),
            request: to_json(req),
            seed: Some(seed),
            checkpoint: Some(loaded.id.clone()),
            source: Some(source.id.clone()),
            layout: None,
            artifacts: vec![store.put_artifact("ui", &png_bytes(&img)?)?, layout_ref.clone()],
            timings_ms: ms,
            metrics: Some(serde_json::json!({
                "compatibility": compat,
                "scorer": engine.scorer.backend_name(),
                "recall": coverage.recall,
            })),
        });
    }
    store.append_results(project, &results)?;
    Ok(results)
}

/// Looks up a UI result and the layout it was generated from.
fn ui_and_layout(store: &Store, project: &str, ui_id: &str) -> Result<(GenerationResult, RgbImage, Layout), ApiError> {
    let p = store.get_project(project)?;
    let ui = p
        .result(ui_id)
        .filter(|r| r.kind == ResultKind::Ui)
        .ok_or_else(|| ApiError::NotFound(format!("UI {ui_id}")))?
        .clone();
    let img = load_png(store, &ui.artifact("ui").expect("ui artifact").hash)?;
    let layout = load_layout(store, &ui.artifact("layout").expect("layout artifact").hash)?;
    Ok((ui, img, layout))
}

fn load_layout(store: &Store, hash: &str) -> Result<Layout, ApiError> {
    let text = String::from_utf8(store.get_artifact(hash)?)
        .map_err(|e| ApiError::Internal(format!("artifact {hash}: {e}")))?;
    Layout::from_json(&text).map_err(|e| ApiError::Internal(format!("artifact {hash}: {e}")))
}

pub fn crop(store: &Store, project: &str, req: &CropRequest) -> Result<GenerationResult, ApiError> {
    let start = Instant::now();
    let (ui, img, layout) = ui_and_layout(store, project, &req.ui_id)?;
    let crops = crop_components(&img, &layout)?;
    let mut artifacts = Vec::with_capacity(crops.len());
    let mut meta = Vec::with_capacity(crops.len());
    for c in &crops {
        let role = format!("crop-{}-{}", c.index, c.category.name().replace(' ', "_"));
        let a = store.put_artifact(&role, &png_bytes(&c.image)?)?;
        let mut m = c.metadata_json();
        m["url"] = serde_json::Value::String(a.url.clone());
        meta.push(m);
        artifacts.push(a);
    }
    let result = GenerationResult {
        id: new_id(),
        kind: ResultKind::Crops,
        created_at: now(),
        request: to_json(req),
        seed: None,
        checkpoint: None,
        source: Some(ui.id),
        layout: None,
        artifacts,
        timings_ms: start.elapsed().as_millis() as u64,
        metrics: Some(serde_json::Value::Array(meta)),
    };
    store.append_results(project, std::slice::from_ref(&result))?;
    Ok(result)
}

pub fn code(store: &Store, project: &str, req: &CodeRequest) -> Result<GenerationResult, ApiError> {
    let start = Instant::now();
    let p = store.get_project(project)?;
    let source = p
        .result(&req.source_id)
        .ok_or_else(|| ApiError::NotFound(format!("result {}", req.source_id)))?;
    let (layout, ui) = match source.kind {
        ResultKind::Layout => {
            let hash = &source.artifact("layout").expect("layout artifact").hash;
            (load_layout(store, hash)?, None)
        }
        ResultKind::Ui => {
            let (_, img, layout) = ui_and_layout(store, project, &source.id)?;
            (layout, Some(img))
        }
        _ => {
            return Err(ApiError::BadRequest(
                "code can be generated from layout or UI results only".into(),
            ))
        }
    };
    let out = generate_code(&layout, ui.as_ref())?;
    let mut artifacts = Vec::new();
    if req.format != CodeFormat::Html {
        artifacts.push(store.put_artifact("xml", out.xml.as_bytes())?);
    }
    if req.format != CodeFormat::Xml {
        artifacts.push(store.put_artifact("html", out.html.as_bytes())?);
    }
    let result = GenerationResult {
        id: new_id(),
        kind: ResultKind::Code,
        created_at: now(),
        request: to_json(req),
        seed: None,
        checkpoint: None,
        source: Some(source.id.clone()),
        layout: None,
        artifacts,
        timings_ms: start.elapsed().as_millis() as u64,
        metrics: None,
    };
    store.append_results(project, std::slice::from_ref(&result))?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub result_id: String,
    pub checkpoint: String,
    pub recorded: String,
    pub replayed: String,
    pub identical: bool,
}

/// Regenerates a layout or UI result from its recorded checkpoint, request
/// and seed and compares artifact hashes.
pub fn replay(engine: &Engine, store: &Store, project: &str, result_id: &str) -> Result<ReplayReport, ApiError> {
    let p = store.get_project(project)?;
    let r = p
        .result(result_id)
        .ok_or_else(|| ApiError::NotFound(format!("result {result_id}")))?;
    let recorded_ckpt = r.checkpoint.clone().unwrap_or_default();
    let seed = r
        .seed
        .ok_or_else(|| ApiError::BadRequest("only layout and UI results can be replayed".into()))?;
    let mismatch = |loaded: &str| {
        ApiError::Conflict(format!(
            "result was produced by checkpoint {recorded_ckpt}, loaded is {loaded}"
        ))
    };
    let (role, bytes) = match r.kind {
        ResultKind::Layout => {
            let loaded = engine.layout_model()?;
            if loaded.id != recorded_ckpt {
                return Err(mismatch(&loaded.id));
            }
            let mut req: LayoutRequest = serde_json::from_value(r.request.clone())
                .map_err(|e| ApiError::Internal(format!("stored request: {e}")))?;
            req.seed = seed;
            req.n_layouts = 1;
            let cond = req.validate(engine)?;
            let layout = sample_layouts(engine, &req, &cond)?.remove(0);
            ("layout", layout.to_json().into_bytes())
        }
        ResultKind::Ui => {
            let loaded = engine.ui_model()?;
            if loaded.id != recorded_ckpt {
                return Err(mismatch(&loaded.id));
            }
            let req: UiRequest = serde_json::from_value(r.request.clone())
                .map_err(|e| ApiError::Internal(format!("stored request: {e}")))?;
            let (_, _, layout) = ui_and_layout(store, project, &r.id)?;
            let img = generate_ui(&loaded.model, &req.prompt, &layout, seed, req.steps)?;
            ("ui", png_bytes(&img)?)
        }
        _ => unreachable!("only layout and UI results carry seeds"),
    };
    let recorded: &ArtifactRef = r.artifact(role).expect("recorded artifact");
    let replayed = content_hash(&bytes);
    Ok(ReplayReport {
        result_id: r.id.clone(),
        checkpoint: recorded_ckpt,
        identical: replayed == recorded.hash,
        recorded: recorded.hash.clone(),
        replayed,
    })
}
