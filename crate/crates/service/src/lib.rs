//! HTTP service over the layout and UI generators.
//!
//! Generation requests go through a bounded job queue; every output is
//! stored content-addressed and recorded in its project so it can be
//! replayed against the same checkpoint.

pub mod api;
pub mod engine;
pub mod error;
pub mod jobs;
pub mod schemas;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

pub use api::{router, AppState};
pub use engine::{CodeFormat, CodeRequest, CropRequest, Engine, LayoutRequest, ReplayReport, UiRequest};
pub use error::ApiError;
pub use jobs::{JobQueue, JobStatus};
pub use store::{ArtifactRef, GenerationResult, Project, ResultKind, Store, StoreError};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub store_root: PathBuf,
    pub layout_ckpt: Option<PathBuf>,
    pub ui_ckpt: Option<PathBuf>,
    /// Jobs waiting beyond this many are refused with 429.
    pub queue_capacity: usize,
    pub workers: usize,
    pub sync_timeout: Duration,
}

impl ServiceConfig {
    pub fn new(store_root: impl Into<PathBuf>) -> Self {
        Self {
            store_root: store_root.into(),
            layout_ckpt: None,
            ui_ckpt: None,
            queue_capacity: 8,
            workers: 1,
            sync_timeout: Duration::from_secs(120),
        }
    }
}

/// Builds the shared state. Must run inside a tokio runtime.
pub fn build_state(cfg: &ServiceConfig) -> Result<AppState, ApiError> {
    let store = Store::open(&cfg.store_root)?;
    let engine = Engine::load(cfg.layout_ckpt.as_deref(), cfg.ui_ckpt.as_deref())?;
    Ok(AppState {
        store: Arc::new(store),
        engine: Arc::new(engine),
        jobs: JobQueue::start(cfg.queue_capacity, cfg.workers),
        sync_timeout: cfg.sync_timeout,
    })
}

pub async fn serve(cfg: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = build_state(&cfg).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %cfg.store_root.display(), "serving");
    axum::serve(listener, router(state)).await
}
