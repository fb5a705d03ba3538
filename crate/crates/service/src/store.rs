//! On-disk project store: content-addressed artifacts under `artifacts/`,
//! one JSON document per project under `projects/`.

use std::collections::HashSet;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use uidiff_core::Layout;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("storage is full while writing {0}")]
    StorageFull(PathBuf),
    #[error("io failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt metadata at {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == ErrorKind::StorageFull {
            Self::StorageFull(path.to_path_buf())
        } else {
            Self::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub role: String,
    pub hash: String,
    pub media_type: String,
    pub url: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultKind {
    Layout,
    Ui,
    Crops,
    Code,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub id: String,
    pub kind: ResultKind,
    pub created_at: u64,
    /// The request as received.
    pub request: serde_json::Value,
    /// Seed this particular output was drawn with.
    pub seed: Option<u64>,
    pub checkpoint: Option<String>,
    /// Result this one was derived from (a layout for UIs, a UI or layout
    /// for crops and code).
    pub source: Option<String>,
    pub layout: Option<Layout>,
    pub artifacts: Vec<ArtifactRef>,
    pub timings_ms: u64,
    pub metrics: Option<serde_json::Value>,
}

impl GenerationResult {
    pub fn artifact(&self, role: &str) -> Option<&ArtifactRef> {
        self.artifacts.iter().find(|a| a.role == role)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub name: String,
    pub created_at: u64,
    pub results: Vec<GenerationResult>,
}

impl Project {
    pub fn result(&self, id: &str) -> Option<&GenerationResult> {
        self.results.iter().find(|r| r.id == id)
    }

    fn hashes(&self) -> impl Iterator<Item = &str> {
        self.results
            .iter()
            .flat_map(|r| r.artifacts.iter().map(|a| a.hash.as_str()))
    }
}

pub fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_hex(s: &str, len: usize) -> bool {
    s.len() == len && s.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

/// Sniffs the stored bytes; artifacts carry no separate type record.
pub fn media_type(bytes: &[u8]) -> &'static str {
    let head = String::from_utf8_lossy(&bytes[..bytes.len().min(64)]);
    let head = head.trim_start();
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        "image/png"
    } else if head.starts_with("<!DOCTYPE html") {
        "text/html; charset=utf-8"
    } else if head.starts_with('<') {
        "application/xml"
    } else if head.starts_with('{') || head.starts_with('[') {
        "application/json"
    } else {
        "application/octet-stream"
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", new_id()));
    std::fs::write(&tmp, bytes).map_err(|e| StoreError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        StoreError::io(path, e)
    })
}

pub struct Store {
    root: PathBuf,
    /// Serializes every metadata mutation and garbage collection.
    lock: Mutex<()>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["artifacts", "projects"] {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        }
        Ok(Self {
            root,
            lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn artifact_path(&self, hash: &str) -> PathBuf {
        self.root.join("artifacts").join(&hash[..2]).join(hash)
    }

    fn project_path(&self, id: &str) -> Result<PathBuf> {
        if !is_hex(id, 32) {
            return Err(StoreError::NotFound(format!("project {id}")));
        }
        Ok(self.root.join("projects").join(format!("{id}.json")))
    }

    /// Stores `bytes` under their sha256 and returns a reference.
    pub fn put_artifact(&self, role: &str, bytes: &[u8]) -> Result<ArtifactRef> {
        let hash = content_hash(bytes);
        let path = self.artifact_path(&hash);
        if !path.exists() {
            let dir = path.parent().expect("artifact dir");
            std::fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
            write_atomic(&path, bytes)?;
        }
        Ok(ArtifactRef {
            role: role.to_string(),
            url: format!("/api/artifacts/{hash}"),
            hash,
            media_type: media_type(bytes).to_string(),
        })
    }

    pub fn get_artifact(&self, hash: &str) -> Result<Vec<u8>> {
        if !is_hex(hash, 64) {
            return Err(StoreError::NotFound(format!("artifact {hash}")));
        }
        let path = self.artifact_path(hash);
        std::fs::read(&path).map_err(|e| match e.kind() {
            ErrorKind::NotFound => StoreError::NotFound(format!("artifact {hash}")),
            _ => StoreError::io(&path, e),
        })
    }

    pub fn create_project(&self, name: &str) -> Result<Project> {
        let project = Project {
            id: new_id(),
            name: name.to_string(),
            created_at: now(),
            results: Vec::new(),
        };
        let _guard = self.lock.lock().expect("store lock");
        self.write_project(&project)?;
        Ok(project)
    }

    fn write_project(&self, p: &Project) -> Result<()> {
        let path = self.project_path(&p.id)?;
        let bytes = serde_json::to_vec_pretty(p).expect("project serializes");
        write_atomic(&path, &bytes)
    }

    pub fn get_project(&self, id: &str) -> Result<Project> {
        let path = self.project_path(id)?;
        let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
            ErrorKind::NotFound => StoreError::NotFound(format!("project {id}")),
            _ => StoreError::io(&path, e),
        })?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path,
            reason: e.to_string(),
        })
    }

    pub fn list_projects(&self) -> Result<Vec<Project>> {
        let dir = self.root.join("projects");
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| StoreError::io(&dir, e))? {
            let entry = entry.map_err(|e| StoreError::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".json") {
                match self.get_project(id) {
                    Ok(p) => out.push(p),
                    Err(StoreError::NotFound(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        out.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        Ok(out)
    }

    /// Appends results to a project. Artifacts must already be stored, so a
    /// crash in between leaves unreferenced files, never dangling metadata.
    pub fn append_results(&self, id: &str, results: &[GenerationResult]) -> Result<()> {
        let _guard = self.lock.lock().expect("store lock");
        let mut p = self.get_project(id)?;
        p.results.extend_from_slice(results);
        self.write_project(&p)
    }

    /// Deletes the project and every artifact no other project references.
    /// Returns the removed hashes.
    pub fn delete_project(&self, id: &str) -> Result<Vec<String>> {
        let _guard = self.lock.lock().expect("store lock");
        let project = self.get_project(id)?;
        let path = self.project_path(id)?;
        std::fs::remove_file(&path).map_err(|e| StoreError::io(&path, e))?;
        let mut still_used: HashSet<String> = HashSet::new();
        for other in self.list_projects()? {
            still_used.extend(other.hashes().map(String::from));
        }
        let mut removed: Vec<String> = project
            .hashes()
            .filter(|h| !still_used.contains(*h))
            .map(String::from)
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        removed.sort();
        for h in &removed {
            let p = self.artifact_path(h);
            match std::fs::remove_file(&p) {
                Ok(()) => {}
                Err(e) if e.kind() == ErrorKind::NotFound => {}
                Err(e) => return Err(StoreError::io(&p, e)),
            }
        }
        Ok(removed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifacts_are_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        let a = s.put_artifact("x", b"{\"a\":1}").unwrap();
        let b = s.put_artifact("y", b"{\"a\":1}").unwrap();
        assert_eq!(a.hash, b.hash);
        assert_eq!(a.media_type, "application/json");
        assert_eq!(s.get_artifact(&a.hash).unwrap(), b"{\"a\":1}");
        assert!(matches!(s.get_artifact("../etc"), Err(StoreError::NotFound(_))));
        assert!(matches!(s.get_project("../../x"), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn media_types() {
        assert_eq!(media_type(b"\x89PNG\r\n\x1a\nxxxx"), "image/png");
        assert_eq!(media_type(b"<!DOCTYPE html>\n<html>"), "text/html; charset=utf-8");
        assert_eq!(media_type(b"<screen w=\"1\"/>"), "application/xml");
        assert_eq!(media_type(b"\x00\x01"), "application/octet-stream");
    }
}
