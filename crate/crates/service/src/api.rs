use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use uidiff_core::wireframe::{hex, PALETTE_VERSION};
use uidiff_core::ComponentCategory;

use crate::engine::{self, CodeRequest, CropRequest, Engine, LayoutRequest, UiRequest};
use crate::error::ApiError;
use crate::jobs::{JobQueue, JobStatus};
use crate::schemas;
use crate::store::{media_type, Project, Store};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub engine: Arc<Engine>,
    pub jobs: JobQueue,
    /// How long a synchronous request waits before answering 202.
    pub sync_timeout: Duration,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/categories", get(categories))
        .route("/api/schemas", get(all_schemas))
        .route("/api/projects", post(create_project).get(list_projects))
        .route("/api/projects/{id}", get(get_project).delete(delete_project))
        .route("/api/projects/{id}/layouts", post(post_layouts))
        .route("/api/projects/{id}/uis", post(post_uis))
        .route("/api/projects/{id}/crops", post(post_crops))
        .route("/api/projects/{id}/code", post(post_code))
        .route("/api/projects/{id}/results/{rid}/replay", post(post_replay))
        .route("/api/artifacts/{hash}", get(get_artifact))
        .route("/api/jobs/{id}", get(get_job))
        .with_state(state)
}

async fn health(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "layout_checkpoint": s.engine.layout.as_ref().map(|l| l.id.clone()),
        "ui_checkpoint": s.engine.ui.as_ref().map(|u| u.id.clone()),
    }))
}

#[derive(Serialize)]
struct CategoryEntry {
    id: usize,
    name: &'static str,
    color: String,
}

async fn categories(State(s): State<AppState>) -> Json<serde_json::Value> {
    let cats: Vec<CategoryEntry> = ComponentCategory::all()
        .map(|c| CategoryEntry {
            id: c.id(),
            name: c.name(),
            color: hex(s.engine.palette.color(c)),
        })
        .collect();
    Json(serde_json::json!({
        "palette_version": PALETTE_VERSION,
        "background": hex(s.engine.palette.background),
        "categories": cats,
    }))
}

async fn all_schemas() -> Json<serde_json::Value> {
    Json(schemas::all())
}

#[derive(Deserialize)]
struct CreateProject {
    name: String,
}

async fn create_project(
    State(s): State<AppState>,
    Json(req): Json<CreateProject>,
) -> Result<(StatusCode, Json<Project>), ApiError> {
    if req.name.trim().is_empty() {
        return Err(ApiError::BadRequest("project name is empty".into()));
    }
    let store = s.store.clone();
    let p = blocking(move || Ok(store.create_project(&req.name)?)).await?;
    Ok((StatusCode::CREATED, Json(p)))
}

async fn list_projects(State(s): State<AppState>) -> Result<Json<Vec<Project>>, ApiError> {
    let store = s.store.clone();
    Ok(Json(blocking(move || Ok(store.list_projects()?)).await?))
}

async fn get_project(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<Project>, ApiError> {
    let store = s.store.clone();
    Ok(Json(blocking(move || Ok(store.get_project(&id)?)).await?))
}

async fn delete_project(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let store = s.store.clone();
    let removed = blocking(move || Ok(store.delete_project(&id)?)).await?;
    Ok(Json(serde_json::json!({ "deleted": true, "collected_artifacts": removed })))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("task failed: {e}")))?
}

#[derive(Deserialize, Default)]
struct Mode {
    /// Answer 202 with a job id immediately instead of waiting.
    #[serde(default, rename = "async")]
    asynchronous: bool,
}

/// Queues `work`; waits for it unless the caller asked for async mode or
/// the wait exceeds the sync timeout.
async fn run_job(
    s: &AppState,
    mode: Mode,
    work: impl FnOnce() -> Result<serde_json::Value, ApiError> + Send + 'static,
) -> Result<Response, ApiError> {
    let (id, mut rx) = s.jobs.submit(work)?;
    let accepted = || {
        (
            StatusCode::ACCEPTED,
            Json(serde_json::json!({ "job_id": id, "status_url": format!("/api/jobs/{id}") })),
        )
            .into_response()
    };
    if mode.asynchronous {
        return Ok(accepted());
    }
    let finished = tokio::time::timeout(s.sync_timeout, rx.wait_for(JobStatus::is_finished)).await;
    let status = match finished {
        Ok(Ok(status)) => status.clone(),
        Ok(Err(_)) => return Err(ApiError::Internal("job vanished".into())),
        Err(_) => return Ok(accepted()),
    };
    match status {
        JobStatus::Done { result } => Ok(Json(result).into_response()),
        JobStatus::Failed { status, error } => Err(ApiError::from_status(status, error)),
        _ => unreachable!("waited for a finished state"),
    }
}

async fn post_layouts(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(mode): Query<Mode>,
    Json(req): Json<LayoutRequest>,
) -> Result<Response, ApiError> {
    s.store.get_project(&id)?;
    req.validate(&s.engine)?;
    let (engine, store) = (s.engine.clone(), s.store.clone());
    run_job(&s, mode, move || {
        let results = engine::generate_layouts(&engine, &store, &id, &req)?;
        Ok(serde_json::json!({ "results": results }))
    })
    .await
}

async fn post_uis(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(mode): Query<Mode>,
    Json(req): Json<UiRequest>,
) -> Result<Response, ApiError> {
    let p = s.store.get_project(&id)?;
    if p.result(&req.layout_id).is_none() {
        return Err(ApiError::NotFound(format!("layout {}", req.layout_id)));
    }
    req.validate(&s.engine)?;
    let (engine, store) = (s.engine.clone(), s.store.clone());
    run_job(&s, mode, move || {
        let results = engine::generate_uis(&engine, &store, &id, &req)?;
        Ok(serde_json::json!({ "results": results }))
    })
    .await
}

async fn post_crops(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<CropRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let store = s.store.clone();
    let r = blocking(move || engine::crop(&store, &id, &req)).await?;
    Ok(Json(serde_json::json!({ "result": r })))
}

async fn post_code(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<CodeRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let store = s.store.clone();
    let r = blocking(move || engine::code(&store, &id, &req)).await?;
    Ok(Json(serde_json::json!({ "result": r })))
}

async fn post_replay(
    State(s): State<AppState>,
    Path((id, rid)): Path<(String, String)>,
    Query(mode): Query<Mode>,
) -> Result<Response, ApiError> {
    let (engine, store) = (s.engine.clone(), s.store.clone());
    run_job(&s, mode, move || {
        let report = engine::replay(&engine, &store, &id, &rid)?;
        Ok(serde_json::to_value(report).expect("report serializes"))
    })
    .await
}

async fn get_artifact(State(s): State<AppState>, Path(hash): Path<String>) -> Result<Response, ApiError> {
    let store = s.store.clone();
    let h = hash.clone();
    let bytes = blocking(move || Ok(store.get_artifact(&h)?)).await?;
    Ok((
        [
            (header::CONTENT_TYPE, media_type(&bytes).to_string()),
            (header::ETAG, format!("\"{hash}\"")),
            (header::CACHE_CONTROL, "public, max-age=31536000, immutable".to_string()),
        ],
        bytes,
    )
        .into_response())
}

async fn get_job(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<JobStatus>, ApiError> {
    s.jobs
        .status(&id)
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("job {id}")))
}
