// SPDX-License-Identifier: Apache-2.0

//! Portable computation-graph description of a layered CNN classifier.
//!
//! Tensors are either vectors `[n]` or channel-major images `[c, h, w]`,
//! always stored row-major. Parameters live in a separate [`WeightStore`]
//! so the architecture can be handed out without them.

pub(crate) mod eval;
mod manifest;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eval::{
    aggregate_views, encode_weights, eval_fixed, eval_fixed_trace, eval_float, im2col,
    pool_windows, sigmoid, EncodedLayer, EncodedWeights,
};
pub use manifest::{load_manifest, save_bundle, MANIFEST_VERSION, WEIGHT_SECTION_TAG};

/// Layer kind plus the attributes that determine its output shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerKind {
    Input,
    Dense {
        out_features: usize,
    },
    Conv2D {
        out_channels: usize,
        kernel: [usize; 2],
        #[serde(default = "unit_stride")]
        stride: [usize; 2],
        #[serde(default)]
        padding: [usize; 2],
    },
    ReLU,
    MaxPool {
        window: [usize; 2],
        stride: [usize; 2],
    },
    AvgPool {
        window: [usize; 2],
        stride: [usize; 2],
    },
    GlobalAvgPool,
    BatchNormFolded,
    Concat,
    Flatten,
    Output,
}

fn unit_stride() -> [usize; 2] {
    [1, 1]
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Input => "Input",
            LayerKind::Dense { .. } => "Dense",
            LayerKind::Conv2D { .. } => "Conv2D",
            LayerKind::ReLU => "ReLU",
            LayerKind::MaxPool { .. } => "MaxPool",
            LayerKind::AvgPool { .. } => "AvgPool",
            LayerKind::GlobalAvgPool => "GlobalAvgPool",
            LayerKind::BatchNormFolded => "BatchNormFolded",
            LayerKind::Concat => "Concat",
            LayerKind::Flatten => "Flatten",
            LayerKind::Output => "Output",
        }
    }

    /// Names of the parameter tensors this kind carries, empty for
    /// parameter-free layers.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            LayerKind::Dense { .. } | LayerKind::Conv2D { .. } => &["bias", "weight"],
            LayerKind::BatchNormFolded => &["scale", "shift"],
            _ => &[],
        }
    }

    pub fn is_parameterized(&self) -> bool {
        !self.param_names().is_empty()
    }

    /// Whether the fixed-point schedule rescales this layer's output once.
    pub fn truncates(&self) -> bool {
        matches!(
            self,
            LayerKind::Dense { .. }
                | LayerKind::Conv2D { .. }
                | LayerKind::BatchNormFolded
                | LayerKind::AvgPool { .. }
                | LayerKind::GlobalAvgPool
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default)]
    pub inputs: Vec<String>,
}

impl LayerSpec {
    pub fn new(id: impl Into<String>, kind: LayerKind, inputs: &[&str]) -> Self {
        LayerSpec {
            id: id.into(),
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// A validated, topologically ordered layer DAG with resolved shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationGraph {
    name: String,
    input_shape: Vec<usize>,
    output_width: usize,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl ComputationGraph {
    /// Validates the layer list and resolves every output shape. Layers
    /// with no explicit inputs consume the preceding layer.
    pub fn new(
        name: impl Into<String>,
        input_shape: Vec<usize>,
        output_width: usize,
        mut layers: Vec<LayerSpec>,
    ) -> Result<Self> {
        if !(input_shape.len() == 1 || input_shape.len() == 3) || input_shape.contains(&0) {
            return Err(Error::InvalidGraph(format!(
                "input shape {input_shape:?} must be [n] or [c, h, w] with non-zero dims"
            )));
        }
        if output_width == 0 {
            return Err(Error::InvalidGraph("output width must be positive".into()));
        }
        let mut index = HashMap::new();
        for i in 0..layers.len() {
            if layers[i].inputs.is_empty() && layers[i].kind != LayerKind::Input && i > 0 {
                let prev = layers[i - 1].id.clone();
                layers[i].inputs.push(prev);
            }
            let layer = &layers[i];
            if index.insert(layer.id.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate layer id `{}`", layer.id)));
            }
        }
        let n_inputs = layers.iter().filter(|l| l.kind == LayerKind::Input).count();
        let n_outputs = layers.iter().filter(|l| l.kind == LayerKind::Output).count();
        if n_inputs != 1 || n_outputs != 1 {
            return Err(Error::InvalidGraph(format!(
                "need exactly one Input and one Output layer, found {n_inputs} and {n_outputs}"
            )));
        }
        if layers[0].kind != LayerKind::Input {
            return Err(Error::InvalidGraph("first layer must be the Input".into()));
        }
        if layers.last().map(|l| &l.kind) != Some(&LayerKind::Output) {
            return Err(Error::InvalidGraph("last layer must be the Output".into()));
        }

        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let mut in_shapes = Vec::with_capacity(layer.inputs.len());
            for input in &layer.inputs {
                match index.get(input) {
                    Some(&j) if j < i => in_shapes.push(shapes[j].clone()),
                    _ => {
                        return Err(Error::DanglingReference {
                            layer: layer.id.clone(),
                            input: input.clone(),
                        })
                    }
                }
            }
            let shape = infer_shape(layer, &in_shapes, &input_shape, output_width)?;
            shapes.push(shape);
        }
        Ok(ComputationGraph {
            name: name.into(),
            input_shape,
            output_width,
            layers,
            shapes,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Output shape of layer `i`.
    pub fn shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Indices of the layers feeding layer `i`.
    pub fn input_positions(&self, i: usize) -> Vec<usize> {
        self.layers[i]
            .inputs
            .iter()
            .map(|id| self.index[id])
            .collect()
    }

    /// Number of rescaling steps along the whole schedule.
    pub fn truncation_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.kind.truncates()).count()
    }

    /// Expected shape of every parameter tensor of layer `i`.
    pub fn param_shapes(&self, i: usize) -> BTreeMap<&'static str, Vec<usize>> {
        let layer = &self.layers[i];
        let mut out = BTreeMap::new();
        let in_shape = self
            .input_positions(i)
            .first()
            .map(|&j| self.shapes[j].clone())
            .unwrap_or_default();
        match &layer.kind {
            LayerKind::Dense { out_features } => {
                out.insert("weight", vec![*out_features, in_shape[0]]);
                out.insert("bias", vec![*out_features]);
            }
            LayerKind::Conv2D {
                out_channels,
                kernel,
                ..
            } => {
                out.insert(
                    "weight",
                    vec![*out_channels, in_shape[0], kernel[0], kernel[1]],
                );
                out.insert("bias", vec![*out_channels]);
            }
            LayerKind::BatchNormFolded => {
                out.insert("scale", vec![in_shape[0]]);
                out.insert("shift", vec![in_shape[0]]);
            }
            _ => {}
        }
        out
    }
}

fn pooled(len: usize, window: usize, stride: usize, pad: usize) -> Option<usize> {
    if window == 0 || stride == 0 || len + 2 * pad < window {
        None
    } else {
        Some((len + 2 * pad - window) / stride + 1)
    }
}

fn infer_shape(
    layer: &LayerSpec,
    in_shapes: &[Vec<usize>],
    input_shape: &[usize],
    output_width: usize,
) -> Result<Vec<usize>> {
    let bad = |msg: String| Error::ShapeMismatch(format!("layer `{}`: {msg}", layer.id));
    let arity = match layer.kind {
        LayerKind::Input => 0,
        LayerKind::Concat => usize::MAX,
        _ => 1,
    };
    if arity == usize::MAX {
        if in_shapes.is_empty() {
            return Err(bad("Concat needs at least one input".into()));
        }
    } else if in_shapes.len() != arity {
        return Err(bad(format!(
            "{} takes {arity} input(s), got {}",
            layer.kind.name(),
            in_shapes.len()
        )));
    }
    let image = |s: &Vec<usize>| -> Result<(usize, usize, usize)> {
        if s.len() == 3 {
            Ok((s[0], s[1], s[2]))
        } else {
            Err(bad(format!("expected [c, h, w] input, got {s:?}")))
        }
    };
    match &layer.kind {
        LayerKind::Input => Ok(input_shape.to_vec()),
        LayerKind::Dense { out_features } => {
            if in_shapes[0].len() != 1 {
                return Err(bad(format!(
                    "Dense expects a vector input, got {:?}",
                    in_shapes[0]
                )));
            }
            if *out_features == 0 {
                return Err(bad("out_features must be positive".into()));
            }
            Ok(vec![*out_features])
        }
        LayerKind::Conv2D {
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let (_, h, w) = image(&in_shapes[0])?;
            let oh = pooled(h, kernel[0], stride[0], padding[0]);
            let ow = pooled(w, kernel[1], stride[1], padding[1]);
            match (oh, ow) {
                (Some(oh), Some(ow)) if *out_channels > 0 => Ok(vec![*out_channels, oh, ow]),
                _ => Err(bad(format!(
                    "kernel {kernel:?} stride {stride:?} padding {padding:?} invalid for {h}x{w}"
                ))),
            }
        }
        LayerKind::MaxPool { window, stride } | LayerKind::AvgPool { window, stride } => {
            let (c, h, w) = image(&in_shapes[0])?;
            match (
                pooled(h, window[0], stride[0], 0),
                pooled(w, window[1], stride[1], 0),
            ) {
                (Some(oh), Some(ow)) => Ok(vec![c, oh, ow]),
                _ => Err(bad(format!(
                    "window {window:?} stride {stride:?} invalid for {h}x{w}"
                ))),
            }
        }
        LayerKind::GlobalAvgPool => {
            let (c, _, _) = image(&in_shapes[0])?;
            Ok(vec![c])
        }
        LayerKind::ReLU | LayerKind::BatchNormFolded => Ok(in_shapes[0].clone()),
        LayerKind::Flatten => Ok(vec![in_shapes[0].iter().product()]),
        LayerKind::Concat => {
            let first = &in_shapes[0];
            match first.len() {
                1 => {
                    if in_shapes.iter().any(|s| s.len() != 1) {
                        return Err(bad("Concat mixes vector and image inputs".into()));
                    }
                    Ok(vec![in_shapes.iter().map(|s| s[0]).sum()])
                }
                _ => {
                    let mut c = 0;
                    for s in in_shapes {
                        if s.len() != 3 || s[1..] != first[1..] {
                            return Err(bad(format!(
                                "Concat inputs disagree on spatial dims: {first:?} vs {s:?}"
                            )));
                        }
                        c += s[0];
                    }
                    Ok(vec![c, first[1], first[2]])
                }
            }
        }
        LayerKind::Output => {
            if in_shapes[0] != [output_width] {
                return Err(bad(format!(
                    "Output expects [{output_width}], got {:?}",
                    in_shapes[0]
                )));
            }
            Ok(in_shapes[0].clone())
        }
    }
}

/// Float tensor as stored in the weight section.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl FloatTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(FloatTensor { shape, data })
    }
}

/// Layer id -> parameter name -> tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    pub layers: BTreeMap<String, BTreeMap<String, FloatTensor>>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn insert(&mut self, layer: &str, param: &str, tensor: FloatTensor) {
        self.layers
            .entry(layer.to_string())
            .or_default()
            .insert(param.to_string(), tensor);
    }

    pub fn get(&self, layer: &str, param: &str) -> Option<&FloatTensor> {
        self.layers.get(layer).and_then(|m| m.get(param))
    }

    /// Checks that exactly the parameterized layers have entries, with the
    /// expected parameter names and shapes.
    pub fn validate(&self, graph: &ComputationGraph) -> Result<()> {
        for (i, layer) in graph.layers().iter().enumerate() {
            let expected = graph.param_shapes(i);
            let present = self.layers.get(&layer.id);
            if expected.is_empty() {
                if present.is_some() {
                    return Err(Error::ShapeMismatch(format!(
                        "layer `{}` ({}) takes no parameters",
                        layer.id,
                        layer.kind.name()
                    )));
                }
                continue;
            }
            let present = present.ok_or_else(|| {
                Error::ShapeMismatch(format!("missing parameters for layer `{}`", layer.id))
            })?;
            if present.len() != expected.len() {
                return Err(Error::ShapeMismatch(format!(
                    "layer `{}` expects parameters {:?}, got {:?}",
                    layer.id,
                    expected.keys().collect::<Vec<_>>(),
                    present.keys().collect::<Vec<_>>()
                )));
            }
            for (name, shape) in expected {
                match present.get(name) {
                    Some(t) if t.shape == shape => {}
                    Some(t) => {
                        return Err(Error::ShapeMismatch(format!(
                            "layer `{}` parameter `{name}` has shape {:?}, expected {shape:?}",
                            layer.id, t.shape
                        )))
                    }
                    None => {
                        return Err(Error::ShapeMismatch(format!(
                            "layer `{}` is missing parameter `{name}`",
                            layer.id
                        )))
                    }
                }
            }
        }
        for id in self.layers.keys() {
            if graph.position(id).is_none() {
                return Err(Error::DanglingReference {
                    layer: "<weights>".into(),
                    input: id.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BundleRole {
    Server,
    Client,
}

/// Graph plus (for the model owner) its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBundle {
    pub graph: ComputationGraph,
    pub weights: WeightStore,
    pub role: BundleRole,
}

impl GraphBundle {
    pub fn server(graph: ComputationGraph, weights: WeightStore) -> Result<Self> {
        weights.validate(&graph)?;
        Ok(GraphBundle {
            graph,
            weights,
            role: BundleRole::Server,
        })
    }

    /// SHA-256 over the canonical graph description (weights and role
    /// excluded), so server and client bundles of one model agree.
    pub fn graph_hash(&self) -> String {
        manifest::graph_hash(&self.graph)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        save_bundle(self)
    }
}

/// Drops every weight tensor and retags the bundle for the data owner.
pub fn strip_weights(bundle: &GraphBundle) -> GraphBundle {
    GraphBundle {
        graph: bundle.graph.clone(),
        weights: WeightStore::new(),
        role: BundleRole::Client,
    }
}

/// True iff the bundle carries no weight tensors at all.
pub fn verify_stripped(bundle: &GraphBundle) -> bool {
    bundle.weights.is_empty()
}
