// SPDX-License-Identifier: Apache-2.0

//! Image, output and label files.
//!
//! An image is a JSON document `{"shape": [c, h, w], "data": [...]}` or a
//! bare array of numbers. Outputs are one JSON document per image under
//! `<out>/outputs/`, named after the image.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::exit::usage;
use sealedinfer::graph::{load_manifest, ComputationGraph, GraphBundle};

pub fn read_bundle(path: &Path) -> Result<GraphBundle> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_manifest(&bytes).with_context(|| format!("{}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ImageDoc {
    Tensor { shape: Vec<usize>, data: Vec<f64> },
    Flat(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Image {
    pub name: String,
    pub data: Vec<f64>,
}

/// JSON files in `path` (sorted by name), or `path` itself.
fn json_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        if !path.exists() {
            bail!(usage(format!("{} does not exist", path.display())));
        }
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(path).with_context(|| format!("listing {}", path.display()))? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads every image and checks it against the graph's input shape.
pub fn load_images(path: &Path, graph: &ComputationGraph) -> Result<Vec<Image>> {
    let files = json_files(path)?;
    if files.is_empty() {
        bail!(usage(format!("no .json images in {}", path.display())));
    }
    files
        .iter()
        .map(|f| {
            let doc: ImageDoc = read_json(f)?;
            let data = match doc {
                ImageDoc::Tensor { shape, data } => {
                    if shape != graph.input_shape() {
                        bail!(sealedinfer::Error::ShapeMismatch(format!(
                            "{}: shape {shape:?}, graph expects {:?}",
                            f.display(),
                            graph.input_shape()
                        )));
                    }
                    data
                }
                ImageDoc::Flat(data) => data,
            };
            if data.len() != graph.input_len() {
                bail!(sealedinfer::Error::ShapeMismatch(format!(
                    "{}: {} values, graph expects shape {:?} ({} values)",
                    f.display(),
                    data.len(),
                    graph.input_shape(),
                    graph.input_len()
                )));
            }
            Ok(Image { name: stem(f), data })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageOutput {
    pub image: String,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Ring elements of the logits; absent for floating-point runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits_ring: Option<Vec<u64>>,
}

pub fn outputs_dir(out: &Path) -> PathBuf {
    out.join("outputs")
}

pub fn write_output(out: &Path, o: &ImageOutput) -> Result<()> {
    let dir = outputs_dir(out);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join(format!("{}.json", o.image)), o)
}

/// Every output under `<run>/outputs`, keyed by image name.
pub fn read_outputs(run: &Path) -> Result<BTreeMap<String, ImageOutput>> {
    let dir = outputs_dir(run);
    if !dir.is_dir() {
        bail!(usage(format!("{} has no outputs directory", run.display())));
    }
    let mut out = BTreeMap::new();
    for f in json_files(&dir)? {
        let o: ImageOutput = read_json(&f)?;
        out.insert(o.image.clone(), o);
    }
    Ok(out)
}

/// `{"classes": [...], "labels": {"<image>": [0, 1, ...]}}`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelFile {
    pub classes: Vec<String>,
    pub labels: BTreeMap<String, Vec<u8>>,
}
