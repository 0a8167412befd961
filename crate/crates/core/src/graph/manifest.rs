// SPDX-License-Identifier: Apache-2.0

//! Text manifest for graph bundles.
//!
//! A manifest is a JSON document:
//!
//! ```text
//! {
//!   "version": 1,
//!   "name": "mini",
//!   "role": "server" | "client",          (optional)
//!   "input_shape": [1, 4, 4],
//!   "output_width": 2,
//!   "layers": [ {"id": "x", "kind": "Input", "inputs": []}, ... ],
//!   "weights": {                          (optional)
//!     "fc": { "weight": {"shape": [2, 16], "data": "<base64 f32 LE>"}, ... }
//!   }
//! }
//! ```
//!
//! Canonical output sorts every object's keys and omits the weight section
//! when it is empty, so bundles are byte-stable and hashable.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::{BundleRole, ComputationGraph, FloatTensor, GraphBundle, LayerSpec, WeightStore};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// Key under which weight payloads are serialized.
pub const WEIGHT_SECTION_TAG: &str = "\"weights\":";

#[derive(Deserialize)]
struct ManifestDoc {
    version: u32,
    name: String,
    #[serde(default)]
    role: Option<BundleRole>,
    input_shape: Vec<usize>,
    output_width: usize,
    layers: Vec<LayerSpec>,
    #[serde(default)]
    weights: Option<BTreeMap<String, BTreeMap<String, TensorDoc>>>,
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    shape: Vec<usize>,
    data: String,
}

pub fn load_manifest(bytes: &[u8]) -> Result<GraphBundle> {
    let doc: ManifestDoc =
        serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    if doc.version != MANIFEST_VERSION {
        return Err(Error::Parse(format!(
            "unsupported manifest version {} (expected {MANIFEST_VERSION})",
            doc.version
        )));
    }
    let graph = ComputationGraph::new(doc.name, doc.input_shape, doc.output_width, doc.layers)?;

    let mut weights = WeightStore::new();
    for (layer, params) in doc.weights.unwrap_or_default() {
        for (param, t) in params {
            let raw = B64
                .decode(t.data.as_bytes())
                .map_err(|e| Error::Parse(format!("weights `{layer}.{param}`: {e}")))?;
            if raw.len() % 4 != 0 {
                return Err(Error::Parse(format!(
                    "weights `{layer}.{param}`: payload is not a whole number of f32 values"
                )));
            }
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            weights.insert(&layer, &param, FloatTensor::new(t.shape, data)?);
        }
    }

    let role = doc.role.unwrap_or(if weights.is_empty() {
        BundleRole::Client
    } else {
        BundleRole::Server
    });
    match role {
        BundleRole::Server => weights.validate(&graph)?,
        BundleRole::Client if !weights.is_empty() => {
            return Err(Error::Parse(
                "client bundle must not carry a weight section".into(),
            ))
        }
        BundleRole::Client => {}
    }
    Ok(GraphBundle {
        graph,
        weights,
        role,
    })
}

fn graph_value(graph: &ComputationGraph) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("version".into(), Value::from(MANIFEST_VERSION));
    m.insert("name".into(), Value::from(graph.name()));
    m.insert("input_shape".into(), serde_json::to_value(graph.input_shape()).unwrap());
    m.insert("output_width".into(), Value::from(graph.output_width()));
    m.insert("layers".into(), serde_json::to_value(graph.layers()).unwrap());
    m
}

fn canonical(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut entries: Vec<_> = m.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, canonical(v))).collect())
        }
        Value::Array(xs) => Value::Array(xs.into_iter().map(canonical).collect()),
        other => other,
    }
}

fn to_canonical_bytes(v: Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&canonical(v)).expect("json values always serialize");
    out.push(b'\n');
    out
}

pub(crate) fn graph_hash(graph: &ComputationGraph) -> String {
    let bytes = to_canonical_bytes(Value::Object(graph_value(graph)));
    hex::encode(Sha256::digest(&bytes))
}

pub fn save_bundle(bundle: &GraphBundle) -> Vec<u8> {
    let mut m = graph_value(&bundle.graph);
    m.insert("role".into(), serde_json::to_value(bundle.role).unwrap());
    if !bundle.weights.is_empty() {
        let mut section = Map::new();
        for (layer, params) in &bundle.weights.layers {
            let mut pm = Map::new();
            for (name, t) in params {
                let raw: Vec<u8> = t.data.iter().flat_map(|x| x.to_le_bytes()).collect();
                let doc = TensorDoc {
                    shape: t.shape.clone(),
                    data: B64.encode(raw),
                };
                pm.insert(name.clone(), serde_json::to_value(doc).unwrap());
            }
            section.insert(layer.clone(), Value::Object(pm));
        }
        m.insert("weights".into(), Value::Object(section));
    }
    to_canonical_bytes(Value::Object(m))
}
