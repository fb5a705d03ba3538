use std::path::{Path, PathBuf};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;
use uidiff_models::layout_diffusion::{LayoutDenoiser, LayoutModelConfig};
use uidiff_models::ui_diffusion::{UiModel, UiModelConfig};
use uidiff_models::{DType, Device};
use uidiff_service::{build_state, router, schemas, ServiceConfig};

struct Fixture {
    dir: TempDir,
    layout_ckpt: PathBuf,
    ui_ckpt: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let layout_ckpt = dir.path().join("layout.ckpt");
        let ui_ckpt = dir.path().join("ui.ckpt");
        let cfg = LayoutModelConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            ..LayoutModelConfig::default()
        };
        let mut layout = LayoutDenoiser::new(cfg, 0, DType::F32, &Device::Cpu).unwrap();
        layout.steps_trained = 1;
        layout.save(&layout_ckpt).unwrap();
        UiModel::new(UiModelConfig::toy(), 0, DType::F32, &Device::Cpu)
            .unwrap()
            .freeze_base()
            .unwrap()
            .save(&ui_ckpt)
            .unwrap();
        Self {
            dir,
            layout_ckpt,
            ui_ckpt,
        }
    }

    fn store(&self) -> PathBuf {
        self.dir.path().join("store")
    }

    fn config(&self) -> ServiceConfig {
        ServiceConfig {
            layout_ckpt: Some(self.layout_ckpt.clone()),
            ui_ckpt: Some(self.ui_ckpt.clone()),
            ..ServiceConfig::new(self.store())
        }
    }

    fn app(&self) -> Router {
        router(build_state(&self.config()).unwrap())
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    let v = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, v)
}

fn assert_schema(name: &str, instance: &Value) {
    let schema = schemas::schema(name).unwrap_or_else(|| panic!("no schema {name}"));
    let v = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = v.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{instance}");
}

async fn new_project(app: &Router, name: &str) -> String {
    let (s, p) = call_json(app, Method::POST, "/api/projects", Some(json!({ "name": name }))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_schema("Project", &p);
    p["id"].as_str().unwrap().to_string()
}

async fn layouts(app: &Router, project: &str, body: Value) -> Vec<Value> {
    let (s, v) = call_json(app, Method::POST, &format!("/api/projects/{project}/layouts"), Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_schema("Results", &v);
    v["results"].as_array().unwrap().clone()
}

async fn uis(app: &Router, project: &str, body: Value) -> Vec<Value> {
    let (s, v) = call_json(app, Method::POST, &format!("/api/projects/{project}/uis"), Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_schema("Results", &v);
    v["results"].as_array().unwrap().clone()
}

fn artifact<'a>(result: &'a Value, role: &str) -> &'a str {
    result["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["role"] == role)
        .unwrap_or_else(|| panic!("no {role} artifact"))["hash"]
        .as_str()
        .unwrap()
}

fn artifact_file(store: &Path, hash: &str) -> PathBuf {
    store.join("artifacts").join(&hash[..2]).join(hash)
}

#[tokio::test(flavor = "multi_thread")]
async fn full_pipeline_round_trip() {
    let fx = Fixture::new();
    let app = fx.app();

    let (s, health) = call_json(&app, Method::GET, "/api/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(health["status"], "ok");

    let (_, cats) = call_json(&app, Method::GET, "/api/categories", None).await;
    assert_schema("Categories", &cats);

    let (_, all) = call_json(&app, Method::GET, "/api/schemas", None).await;
    for name in schemas::names() {
        assert!(all["$defs"].get(&name).is_some(), "{name}");
    }

    let pid = new_project(&app, "login").await;
    let ls = layouts(
        &app,
        &pid,
        json!({ "components": "text button:2, input:2", "seed": 7, "n_layouts": 2, "layout_steps": 10 }),
    )
    .await;
    assert_eq!(ls.len(), 2);
    for l in &ls {
        assert_eq!(l["metrics"]["coverage"]["recall"], 1.0);
        let (s, bytes) = call(&app, Method::GET, &format!("/api/artifacts/{}", artifact(l, "wireframe")), None).await;
        assert_eq!(s, StatusCode::OK);
        assert!(bytes.starts_with(b"\x89PNG"));
        let (_, layout) = call_json(&app, Method::GET, &format!("/api/artifacts/{}", artifact(l, "layout")), None).await;
        assert_schema("Layout", &layout);
    }

    let layout_id = ls[0]["id"].as_str().unwrap();
    let us = uis(
        &app,
        &pid,
        json!({ "layout_id": layout_id, "prompt": "A login page", "seed": 3, "n_uis_per_layout": 2, "steps": 2 }),
    )
    .await;
    assert_eq!(us.len(), 2);
    assert_eq!(us[0]["seed"], 3);
    assert_eq!(us[1]["seed"], 4);

    let ui_id = us[0]["id"].as_str().unwrap();
    let (s, crops) = call_json(&app, Method::POST, &format!("/api/projects/{pid}/crops"), Some(json!({ "ui_id": ui_id }))).await;
    assert_eq!(s, StatusCode::OK, "{crops}");
    assert_schema("Result", &crops);
    let (_, layout) = call_json(&app, Method::GET, &format!("/api/artifacts/{}", artifact(&ls[0], "layout")), None).await;
    let n = layout["elements"].as_array().unwrap().len();
    assert!(n >= 4);
    assert_eq!(crops["result"]["artifacts"].as_array().unwrap().len(), n);

    let (s, code) = call_json(
        &app,
        Method::POST,
        &format!("/api/projects/{pid}/code"),
        Some(json!({ "source_id": ui_id, "format": "html" })),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_schema("Result", &code);
    let (_, html) = call(&app, Method::GET, &format!("/api/artifacts/{}", artifact(&code["result"], "html")), None).await;
    assert!(String::from_utf8(html).unwrap().starts_with("<!DOCTYPE html>"));

    let (s, project) = call_json(&app, Method::GET, &format!("/api/projects/{pid}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_schema("Project", &project);
    assert_eq!(project["results"].as_array().unwrap().len(), 6);

    let (_, list) = call_json(&app, Method::GET, "/api/projects", None).await;
    assert_schema("ProjectList", &list);
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn error_statuses() {
    let fx = Fixture::new();
    let app = fx.app();
    let missing = "0".repeat(32);

    let (s, e) = call_json(&app, Method::GET, &format!("/api/projects/{missing}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_schema("Error", &e);
    let (s, _) = call_json(&app, Method::GET, "/api/projects/..%2F..%2Fetc", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&app, Method::GET, &format!("/api/artifacts/{}", "a".repeat(64)), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&app, Method::GET, &format!("/api/jobs/{missing}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _) = call_json(&app, Method::POST, "/api/projects", Some(json!({ "name": " " }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let pid = new_project(&app, "errors").await;
    let layouts_uri = format!("/api/projects/{pid}/layouts");
    for body in [
        json!({ "components": "spaceship:1" }),
        json!({ "components": "text:30" }),
        json!({ "n_layouts": 0 }),
    ] {
        let (s, e) = call_json(&app, Method::POST, &layouts_uri, Some(body.clone())).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
        assert_schema("Error", &e);
    }
    let (s, _) = call_json(
        &app,
        Method::POST,
        &format!("/api/projects/{pid}/uis"),
        Some(json!({ "layout_id": missing })),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let ls = layouts(&app, &pid, json!({ "seed": 1, "layout_steps": 5 })).await;
    let lid = ls[0]["id"].as_str().unwrap();
    let (s, _) = call_json(
        &app,
        Method::POST,
        &format!("/api/projects/{pid}/crops"),
        Some(json!({ "ui_id": lid })),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, e) = call_json(
        &app,
        Method::POST,
        &format!("/api/projects/{pid}/uis"),
        Some(json!({ "layout_id": lid, "steps": 0 })),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{e}");
}

#[tokio::test(flavor = "multi_thread")]
async fn missing_checkpoints_are_unavailable() {
    let fx = Fixture::new();
    let app = router(build_state(&ServiceConfig::new(fx.store())).unwrap());
    let pid = new_project(&app, "empty").await;
    let (s, e) = call_json(&app, Method::POST, &format!("/api/projects/{pid}/layouts"), Some(json!({}))).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_schema("Error", &e);

    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("untrained.ckpt");
    LayoutDenoiser::new(LayoutModelConfig { d_model: 16, n_layers: 1, n_heads: 2, ..Default::default() }, 0, DType::F32, &Device::Cpu)
        .unwrap()
        .save(&ckpt)
        .unwrap();
    let cfg = ServiceConfig {
        layout_ckpt: Some(ckpt),
        ..ServiceConfig::new(dir.path().join("store"))
    };
    let app = router(build_state(&cfg).unwrap());
    let pid = new_project(&app, "untrained").await;
    let (s, _) = call_json(&app, Method::POST, &format!("/api/projects/{pid}/layouts"), Some(json!({}))).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test(flavor = "multi_thread")]
async fn async_jobs_and_queue_bound() {
    let fx = Fixture::new();
    let cfg = ServiceConfig {
        queue_capacity: 1,
        ..fx.config()
    };
    let app = router(build_state(&cfg).unwrap());
    let pid = new_project(&app, "queue").await;
    let ls = layouts(&app, &pid, json!({ "seed": 2, "layout_steps": 5 })).await;
    let lid = ls[0]["id"].as_str().unwrap();

    let uri = format!("/api/projects/{pid}/uis?async=true");
    let body = json!({ "layout_id": lid, "n_uis_per_layout": 1, "steps": 20 });
    let mut accepted = Vec::new();
    let mut refused = 0;
    for _ in 0..6 {
        let (s, v) = call_json(&app, Method::POST, &uri, Some(body.clone())).await;
        match s {
            StatusCode::ACCEPTED => {
                assert_schema("JobAccepted", &v);
                accepted.push(v["status_url"].as_str().unwrap().to_string());
            }
            StatusCode::TOO_MANY_REQUESTS => {
                assert_schema("Error", &v);
                refused += 1;
            }
            other => panic!("unexpected {other}"),
        }
    }
    assert!(refused >= 1, "nothing was refused");
    assert!(!accepted.is_empty() && accepted.len() <= 2, "{}", accepted.len());

    for url in accepted {
        let status = loop {
            let (s, v) = call_json(&app, Method::GET, &url, None).await;
            assert_eq!(s, StatusCode::OK);
            assert_schema("JobStatus", &v);
            if v["state"] == "done" || v["state"] == "failed" {
                break v;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        };
        assert_eq!(status["state"], "done", "{status}");
        assert_schema("Results", &status["result"]);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_is_byte_identical_across_restarts() {
    let fx = Fixture::new();
    let app = fx.app();
    let pid = new_project(&app, "replay").await;
    let ls = layouts(&app, &pid, json!({ "components": "toolbar:1, image:1", "seed": 5, "layout_steps": 10 })).await;
    let lid = ls[0]["id"].as_str().unwrap();
    let us = uis(&app, &pid, json!({ "layout_id": lid, "prompt": "A gallery", "seed": 11, "n_uis_per_layout": 2, "steps": 3 })).await;

    // a fresh process state loaded from the same checkpoint files
    let restarted = fx.app();
    for r in us.iter().chain(&ls) {
        let rid = r["id"].as_str().unwrap();
        let (s, report) = call_json(&restarted, Method::POST, &format!("/api/projects/{pid}/results/{rid}/replay"), None).await;
        assert_eq!(s, StatusCode::OK, "{report}");
        assert_schema("ReplayReport", &report);
        assert_eq!(report["identical"], true, "{report}");
    }

    // a different UI checkpoint must refuse to replay
    let other = fx.dir.path().join("other.ckpt");
    UiModel::new(UiModelConfig::toy(), 1, DType::F32, &Device::Cpu)
        .unwrap()
        .save(&other)
        .unwrap();
    let cfg = ServiceConfig {
        ui_ckpt: Some(other),
        ..fx.config()
    };
    let app2 = router(build_state(&cfg).unwrap());
    let rid = us[0]["id"].as_str().unwrap();
    let (s, e) = call_json(&app2, Method::POST, &format!("/api/projects/{pid}/results/{rid}/replay"), None).await;
    assert_eq!(s, StatusCode::CONFLICT, "{e}");
}

#[tokio::test(flavor = "multi_thread")]
async fn delete_collects_only_unshared_artifacts() {
    let fx = Fixture::new();
    let app = fx.app();
    let a = new_project(&app, "a").await;
    let b = new_project(&app, "b").await;
    let body = json!({ "components": "text:2", "seed": 9, "layout_steps": 10 });
    let la = layouts(&app, &a, body.clone()).await;
    let lb = layouts(&app, &b, body).await;
    let shared = artifact(&la[0], "layout").to_string();
    assert_eq!(shared, artifact(&lb[0], "layout"));
    let own = layouts(&app, &a, json!({ "components": "icon:3", "seed": 10, "layout_steps": 10 })).await;
    let private = artifact(&own[0], "wireframe").to_string();

    let (s, v) = call_json(&app, Method::DELETE, &format!("/api/projects/{a}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let collected: Vec<&str> = v["collected_artifacts"].as_array().unwrap().iter().map(|h| h.as_str().unwrap()).collect();
    assert!(collected.contains(&private.as_str()));
    assert!(!collected.contains(&shared.as_str()));
    assert!(!artifact_file(&fx.store(), &private).exists());
    assert!(artifact_file(&fx.store(), &shared).exists());

    let (s, _) = call_json(&app, Method::GET, &format!("/api/projects/{a}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&app, Method::GET, &format!("/api/artifacts/{shared}"), None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_creates_get_distinct_ids() {
    let fx = Fixture::new();
    let app = fx.app();
    let tasks: Vec<_> = (0..16)
        .map(|i| {
            let app = app.clone();
            tokio::spawn(async move { new_project(&app, &format!("p{i}")).await })
        })
        .collect();
    let mut ids = Vec::new();
    for t in tasks {
        ids.push(t.await.unwrap());
    }
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 16);
    let (_, list) = call_json(&app, Method::GET, "/api/projects", None).await;
    assert_eq!(list.as_array().unwrap().len(), 16);
}

#[tokio::test(flavor = "multi_thread")]
async fn stray_temp_files_do_not_surface() {
    let fx = Fixture::new();
    let app = fx.app();
    new_project(&app, "kept").await;
    // an interrupted write leaves only a temp file behind
    std::fs::write(fx.store().join("projects").join("deadbeef.tmp-x"), b"{").unwrap();
    let (s, list) = call_json(&app, Method::GET, "/api/projects", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list.as_array().unwrap().len(), 1);
}
