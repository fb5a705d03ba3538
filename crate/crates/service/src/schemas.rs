//! JSON Schemas (draft 2020-12) of every request and response body.

use serde_json::{json, Value};

fn defs() -> Value {
    let hash = json!({ "type": "string", "pattern": "^[0-9a-f]{64}$" });
    let id = json!({ "type": "string", "pattern": "^[0-9a-f]{32}$" });
    let unit = json!({ "type": "number", "minimum": 0, "maximum": 1 });
    json!({
        "Layout": {
            "type": "object",
            "required": ["canvas", "elements"],
            "additionalProperties": false,
            "properties": {
                "canvas": {
                    "type": "object",
                    "required": ["w", "h"],
                    "additionalProperties": false,
                    "properties": {
                        "w": { "type": "integer", "minimum": 1 },
                        "h": { "type": "integer", "minimum": 1 }
                    }
                },
                "elements": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["category", "bbox", "z"],
                        "additionalProperties": false,
                        "properties": {
                            "category": { "type": "string" },
                            "bbox": { "type": "array", "items": unit, "minItems": 4, "maxItems": 4 },
                            "z": { "type": "integer", "minimum": 0 }
                        }
                    }
                }
            }
        },
        "CreateProject": {
            "type": "object",
            "required": ["name"],
            "properties": { "name": { "type": "string", "minLength": 1 } }
        },
        "LayoutRequest": {
            "type": "object",
            "properties": {
                "prompt": { "type": "string" },
                "components": { "type": "string" },
                "seed": { "type": "integer", "minimum": 0 },
                "n_layouts": { "type": "integer", "minimum": 1, "maximum": 64 },
                "layout_steps": { "type": ["integer", "null"], "minimum": 1 }
            }
        },
        "UiRequest": {
            "type": "object",
            "required": ["layout_id"],
            "properties": {
                "layout_id": id,
                "prompt": { "type": "string" },
                "seed": { "type": "integer", "minimum": 0 },
                "n_uis_per_layout": { "type": "integer", "minimum": 1, "maximum": 64 },
                "steps": { "type": "integer", "minimum": 1, "maximum": 1000 }
            }
        },
        "CropRequest": {
            "type": "object",
            "required": ["ui_id"],
            "properties": { "ui_id": id }
        },
        "CodeRequest": {
            "type": "object",
            "required": ["source_id"],
            "properties": {
                "source_id": id,
                "format": { "enum": ["xml", "html", "both"] }
            }
        },
        "ArtifactRef": {
            "type": "object",
            "required": ["role", "hash", "media_type", "url"],
            "additionalProperties": false,
            "properties": {
                "role": { "type": "string" },
                "hash": hash,
                "media_type": { "type": "string" },
                "url": { "type": "string", "pattern": "^/api/artifacts/[0-9a-f]{64}$" }
            }
        },
        "GenerationResult": {
            "type": "object",
            "required": ["id", "kind", "created_at", "request", "seed", "checkpoint", "source", "layout", "artifacts", "timings_ms", "metrics"],
            "additionalProperties": false,
            "properties": {
                "id": id,
                "kind": { "enum": ["layout", "ui", "crops", "code"] },
                "created_at": { "type": "integer", "minimum": 0 },
                "request": { "type": "object" },
                "seed": { "type": ["integer", "null"], "minimum": 0 },
                "checkpoint": { "type": ["string", "null"] },
                "source": { "oneOf": [id, { "type": "null" }] },
                "layout": { "oneOf": [{ "$ref": "#/$defs/Layout" }, { "type": "null" }] },
                "artifacts": { "type": "array", "items": { "$ref": "#/$defs/ArtifactRef" } },
                "timings_ms": { "type": "integer", "minimum": 0 },
                "metrics": {}
            }
        },
        "Project": {
            "type": "object",
            "required": ["id", "name", "created_at", "results"],
            "additionalProperties": false,
            "properties": {
                "id": id,
                "name": { "type": "string" },
                "created_at": { "type": "integer", "minimum": 0 },
                "results": { "type": "array", "items": { "$ref": "#/$defs/GenerationResult" } }
            }
        },
        "ProjectList": { "type": "array", "items": { "$ref": "#/$defs/Project" } },
        "Results": {
            "type": "object",
            "required": ["results"],
            "properties": {
                "results": { "type": "array", "items": { "$ref": "#/$defs/GenerationResult" } }
            }
        },
        "Result": {
            "type": "object",
            "required": ["result"],
            "properties": { "result": { "$ref": "#/$defs/GenerationResult" } }
        },
        "JobAccepted": {
            "type": "object",
            "required": ["job_id", "status_url"],
            "properties": { "job_id": id, "status_url": { "type": "string" } }
        },
        "JobStatus": {
            "type": "object",
            "required": ["state"],
            "properties": {
                "state": { "enum": ["queued", "running", "done", "failed"] },
                "result": {},
                "status": { "type": "integer" },
                "error": { "type": "string" }
            }
        },
        "ReplayReport": {
            "type": "object",
            "required": ["result_id", "checkpoint", "recorded", "replayed", "identical"],
            "additionalProperties": false,
            "properties": {
                "result_id": id,
                "checkpoint": { "type": "string" },
                "recorded": hash,
                "replayed": hash,
                "identical": { "type": "boolean" }
            }
        },
        "Categories": {
            "type": "object",
            "required": ["palette_version", "background", "categories"],
            "properties": {
                "palette_version": { "type": "string" },
                "background": { "type": "string", "pattern": "^#[0-9a-f]{6}$" },
                "categories": {
                    "type": "array",
                    "minItems": 25,
                    "maxItems": 25,
                    "items": {
                        "type": "object",
                        "required": ["id", "name", "color"],
                        "properties": {
                            "id": { "type": "integer", "minimum": 0, "maximum": 24 },
                            "name": { "type": "string" },
                            "color": { "type": "string", "pattern": "^#[0-9a-f]{6}$" }
                        }
                    }
                }
            }
        },
        "Error": {
            "type": "object",
            "required": ["error", "status"],
            "properties": {
                "error": { "type": "string" },
                "status": { "type": "integer", "minimum": 400, "maximum": 599 }
            }
        }
    })
}

/// Every definition, as served by `GET /api/schemas`.
pub fn all() -> Value {
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "$defs": defs()
    })
}

/// A standalone schema for one definition.
pub fn schema(name: &str) -> Option<Value> {
    let defs = defs();
    defs.get(name)?;
    Some(json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "$ref": format!("#/$defs/{name}"),
        "$defs": defs
    }))
}

pub fn names() -> Vec<String> {
    defs()
        .as_object()
        .expect("object")
        .keys()
        .cloned()
        .collect()
}
