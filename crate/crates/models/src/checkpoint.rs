//! Checkpoint container: a safetensors file whose header carries a format
//! tag, a version, the model kind and a JSON metadata document.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{Device, Tensor};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{ModelError, Result};

pub const FORMAT: &str = "uidiff-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

pub struct Checkpoint<M> {
    pub kind: String,
    pub meta: M,
    pub tensors: HashMap<String, Tensor>,
}

pub fn to_bytes<'a, M: Serialize>(
    kind: &str,
    meta: &M,
    tensors: impl IntoIterator<Item = (&'a String, &'a Tensor)>,
) -> Result<Vec<u8>> {
    let mut header = HashMap::new();
    header.insert("format".to_string(), FORMAT.to_string());
    header.insert("version".to_string(), FORMAT_VERSION.to_string());
    header.insert("kind".to_string(), kind.to_string());
    header.insert(
        "meta".to_string(),
        serde_json::to_string(meta).map_err(|e| ModelError::Checkpoint(e.to_string()))?,
    );
    let mut items: Vec<(&String, Tensor)> = Vec::new();
    for (k, t) in tensors {
        items.push((k, t.contiguous()?));
    }
    items.sort_by(|a, b| a.0.cmp(b.0));
    safetensors::serialize(items.iter().map(|(k, t)| (k.as_str(), t)), Some(header))
        .map_err(|e| ModelError::Checkpoint(e.to_string()))
}

/// Writes next to the destination and renames so readers never see a
/// partial file.
pub fn save<'a, M: Serialize>(
    path: &Path,
    kind: &str,
    meta: &M,
    tensors: impl IntoIterator<Item = (&'a String, &'a Tensor)>,
) -> Result<()> {
    let bytes = to_bytes(kind, meta, tensors)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| ModelError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| ModelError::io(path, e))
}

pub fn from_bytes<M: DeserializeOwned>(
    bytes: &[u8],
    expected_kind: &str,
    device: &Device,
) -> Result<Checkpoint<M>> {
    let (_, header) = safetensors::SafeTensors::read_metadata(bytes)
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let info = header
        .metadata()
        .as_ref()
        .ok_or_else(|| ModelError::Checkpoint("no metadata header".into()))?;
    let field = |k: &str| {
        info.get(k)
            .cloned()
            .ok_or_else(|| ModelError::Checkpoint(format!("metadata lacks {k}")))
    };
    if field("format")? != FORMAT {
        return Err(ModelError::Checkpoint("not a uidiff checkpoint".into()));
    }
    let version = field("version")?;
    if version != FORMAT_VERSION.to_string() {
        return Err(ModelError::CheckpointMismatch {
            what: "format version".into(),
            expected: FORMAT_VERSION.to_string(),
            found: version,
        });
    }
    let kind = field("kind")?;
    if kind != expected_kind {
        return Err(ModelError::CheckpointMismatch {
            what: "checkpoint kind".into(),
            expected: expected_kind.into(),
            found: kind,
        });
    }
    let meta = serde_json::from_str(&field("meta")?)
        .map_err(|e| ModelError::Checkpoint(format!("metadata: {e}")))?;
    let tensors = candle_core::safetensors::load_buffer(bytes, device)?;
    Ok(Checkpoint {
        kind,
        meta,
        tensors,
    })
}

pub fn load<M: DeserializeOwned>(
    path: &Path,
    expected_kind: &str,
    device: &Device,
) -> Result<Checkpoint<M>> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::io(path, e))?;
    from_bytes(&bytes, expected_kind, device)
}
