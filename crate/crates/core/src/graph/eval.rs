// SPDX-License-Identifier: Apache-2.0

//! Plaintext reference evaluators.
//!
//! `eval_fixed` follows the exact schedule the secure runtime uses: one
//! floor truncation after every Dense/Conv2D/BatchNormFolded product and
//! after every average pool (sum times the encoded reciprocal), bias added
//! after truncation at scale `2^f`.

use super::{ComputationGraph, LayerKind, WeightStore};
use crate::error::{Error, Result};
use crate::ring::FixedPointConfig;

/// Patch extraction for cross-correlation. Returns a row-major
/// `K x P` matrix with `K = c*kh*kw` rows ordered `(c, ky, kx)` and
/// `P = oh*ow` columns; out-of-bounds taps read `zero`.
pub fn im2col<T: Copy>(
    input: &[T],
    shape: (usize, usize, usize),
    kernel: [usize; 2],
    stride: [usize; 2],
    padding: [usize; 2],
    zero: T,
) -> (Vec<T>, usize, usize) {
    let (c, h, w) = shape;
    let oh = (h + 2 * padding[0] - kernel[0]) / stride[0] + 1;
    let ow = (w + 2 * padding[1] - kernel[1]) / stride[1] + 1;
    let rows = c * kernel[0] * kernel[1];
    let cols = oh * ow;
    let mut out = Vec::with_capacity(rows * cols);
    for ch in 0..c {
        for ky in 0..kernel[0] {
            for kx in 0..kernel[1] {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let y = (oy * stride[0] + ky) as isize - padding[0] as isize;
                        let x = (ox * stride[1] + kx) as isize - padding[1] as isize;
                        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                            out.push(zero);
                        } else {
                            out.push(input[ch * h * w + y as usize * w + x as usize]);
                        }
                    }
                }
            }
        }
    }
    (out, rows, cols)
}

/// For each window offset, the input index feeding every output position
/// of a valid (unpadded) pool over `[c, h, w]`.
pub fn pool_windows(
    shape: (usize, usize, usize),
    window: [usize; 2],
    stride: [usize; 2],
) -> Vec<Vec<usize>> {
    let (c, h, w) = shape;
    let oh = (h - window[0]) / stride[0] + 1;
    let ow = (w - window[1]) / stride[1] + 1;
    let mut offsets = Vec::with_capacity(window[0] * window[1]);
    for wy in 0..window[0] {
        for wx in 0..window[1] {
            let mut idx = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        idx.push(ch * h * w + (oy * stride[0] + wy) * w + ox * stride[1] + wx);
                    }
                }
            }
            offsets.push(idx);
        }
    }
    offsets
}

fn dims3(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2])
}

fn check_input(graph: &ComputationGraph, len: usize) -> Result<()> {
    if len != graph.input_len() {
        return Err(Error::ShapeMismatch(format!(
            "input has {len} values, graph expects shape {:?} ({} values)",
            graph.input_shape(),
            graph.input_len()
        )));
    }
    Ok(())
}

/// Forward pass in `f64` arithmetic. Returns the Output layer's logits.
pub fn eval_float(graph: &ComputationGraph, weights: &WeightStore, input: &[f64]) -> Result<Vec<f64>> {
    check_input(graph, input.len())?;
    weights.validate(graph)?;
    let param = |id: &str, name: &str| -> Vec<f64> {
        weights
            .get(id, name)
            .map(|t| t.data.iter().map(|&v| v as f64).collect())
            .unwrap_or_default()
    };
    let mut outs: Vec<Vec<f64>> = Vec::with_capacity(graph.layers().len());
    for (i, layer) in graph.layers().iter().enumerate() {
        let ins = graph.input_positions(i);
        let x = ins.first().map(|&j| outs[j].as_slice()).unwrap_or(&[]);
        let in_shape = ins.first().map(|&j| graph.shape(j)).unwrap_or(&[]);
        let y = match &layer.kind {
            LayerKind::Input => input.to_vec(),
            LayerKind::Dense { out_features } => {
                let w = param(&layer.id, "weight");
                let b = param(&layer.id, "bias");
                let n = x.len();
                (0..*out_features)
                    .map(|o| (0..n).map(|i| w[o * n + i] * x[i]).sum::<f64>() + b[o])
                    .collect()
            }
            LayerKind::Conv2D {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let w = param(&layer.id, "weight");
                let b = param(&layer.id, "bias");
                let (cols, k, p) = im2col(x, dims3(in_shape), *kernel, *stride, *padding, 0.0);
                let mut y = Vec::with_capacity(out_channels * p);
                for o in 0..*out_channels {
                    for j in 0..p {
                        let acc: f64 = (0..k).map(|r| w[o * k + r] * cols[r * p + j]).sum();
                        y.push(acc + b[o]);
                    }
                }
                y
            }
            LayerKind::BatchNormFolded => {
                let s = param(&layer.id, "scale");
                let t = param(&layer.id, "shift");
                let per = x.len() / in_shape[0];
                x.iter()
                    .enumerate()
                    .map(|(i, &v)| v * s[i / per] + t[i / per])
                    .collect()
            }
            LayerKind::ReLU => x.iter().map(|&v| v.max(0.0)).collect(),
            LayerKind::MaxPool { window, stride } => {
                let win = pool_windows(dims3(in_shape), *window, *stride);
                (0..win[0].len())
                    .map(|o| {
                        win.iter()
                            .map(|idx| x[idx[o]])
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect()
            }
            LayerKind::AvgPool { window, stride } => {
                let win = pool_windows(dims3(in_shape), *window, *stride);
                let n = win.len() as f64;
                (0..win[0].len())
                    .map(|o| win.iter().map(|idx| x[idx[o]]).sum::<f64>() / n)
                    .collect()
            }
            LayerKind::GlobalAvgPool => {
                let (c, h, w) = dims3(in_shape);
                (0..c)
                    .map(|ch| x[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / (h * w) as f64)
                    .collect()
            }
            LayerKind::Concat => ins.iter().flat_map(|&j| outs[j].iter().copied()).collect(),
            LayerKind::Flatten | LayerKind::Output => x.to_vec(),
        };
        outs.push(y);
    }
    Ok(outs.pop().unwrap_or_default())
}

/// Fixed-point parameters of one layer: the multiplicative tensor
/// (weight or scale) and the additive one (bias or shift).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EncodedLayer {
    pub mult: Vec<u64>,
    pub add: Vec<u64>,
}

/// Encoded parameters indexed by layer position (empty for parameter-free
/// layers).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedWeights {
    pub layers: Vec<EncodedLayer>,
}

pub fn encode_weights(
    graph: &ComputationGraph,
    weights: &WeightStore,
    cfg: &FixedPointConfig,
) -> Result<EncodedWeights> {
    weights.validate(graph)?;
    let mut layers = Vec::with_capacity(graph.layers().len());
    for layer in graph.layers() {
        let names = layer.kind.param_names();
        if names.is_empty() {
            layers.push(EncodedLayer::default());
            continue;
        }
        let (mult_name, add_name) = match layer.kind {
            LayerKind::BatchNormFolded => ("scale", "shift"),
            _ => ("weight", "bias"),
        };
        let enc = |name: &str| -> Result<Vec<u64>> {
            let t = weights.get(&layer.id, name).expect("validated above");
            t.data.iter().map(|&v| cfg.encode(v as f64)).collect()
        };
        layers.push(EncodedLayer {
            mult: enc(mult_name)?,
            add: enc(add_name)?,
        });
    }
    Ok(EncodedWeights { layers })
}

/// Encoded `1/n`, the multiplier used for average pooling.
pub(crate) fn reciprocal(n: usize, cfg: &FixedPointConfig) -> u64 {
    cfg.encode(1.0 / n as f64)
        .expect("1/n always fits for f <= k-4")
}

/// Fixed-point forward pass returning every layer's output.
pub fn eval_fixed_trace(
    graph: &ComputationGraph,
    weights: &WeightStore,
    input: &[f64],
    cfg: &FixedPointConfig,
) -> Result<Vec<Vec<u64>>> {
    check_input(graph, input.len())?;
    let enc = encode_weights(graph, weights, cfg)?;
    let x0 = cfg.encode_all(input)?;
    let f = cfg.f();
    let mut outs: Vec<Vec<u64>> = Vec::with_capacity(graph.layers().len());
    for (i, layer) in graph.layers().iter().enumerate() {
        let ins = graph.input_positions(i);
        let x = ins.first().map(|&j| outs[j].as_slice()).unwrap_or(&[]);
        let in_shape = ins.first().map(|&j| graph.shape(j)).unwrap_or(&[]);
        let params = &enc.layers[i];
        let y: Vec<u64> = match &layer.kind {
            LayerKind::Input => x0.clone(),
            LayerKind::Dense { out_features } => {
                let n = x.len();
                (0..*out_features)
                    .map(|o| {
                        let mut acc = 0u64;
                        for (i, &xi) in x.iter().enumerate() {
                            acc = cfg.add(acc, cfg.mul(params.mult[o * n + i], xi));
                        }
                        cfg.add(cfg.trunc_floor(acc, f), params.add[o])
                    })
                    .collect()
            }
            LayerKind::Conv2D {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (c, h, w) = dims3(in_shape);
                let out_shape = graph.shape(i);
                let (oh, ow) = (out_shape[1], out_shape[2]);
                let mut y = Vec::with_capacity(out_channels * oh * ow);
                for o in 0..*out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = 0u64;
                            for ch in 0..c {
                                for ky in 0..kernel[0] {
                                    for kx in 0..kernel[1] {
                                        let iy = (oy * stride[0] + ky) as isize - padding[0] as isize;
                                        let ix = (ox * stride[1] + kx) as isize - padding[1] as isize;
                                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                            continue;
                                        }
                                        let wv = params.mult
                                            [((o * c + ch) * kernel[0] + ky) * kernel[1] + kx];
                                        let xv = x[(ch * h + iy as usize) * w + ix as usize];
                                        acc = cfg.add(acc, cfg.mul(wv, xv));
                                    }
                                }
                            }
                            y.push(cfg.add(cfg.trunc_floor(acc, f), params.add[o]));
                        }
                    }
                }
                y
            }
            LayerKind::BatchNormFolded => {
                let per = x.len() / in_shape[0];
                x.iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let c = i / per;
                        cfg.add(cfg.trunc_floor(cfg.mul(v, params.mult[c]), f), params.add[c])
                    })
                    .collect()
            }
            LayerKind::ReLU => x
                .iter()
                .map(|&v| if cfg.signed(v) >= 0 { v } else { 0 })
                .collect(),
            LayerKind::MaxPool { window, stride } | LayerKind::AvgPool { window, stride } => {
                let (c, h, w) = dims3(in_shape);
                let out_shape = graph.shape(i);
                let (oh, ow) = (out_shape[1], out_shape[2]);
                let is_max = matches!(layer.kind, LayerKind::MaxPool { .. });
                let recip = reciprocal(window[0] * window[1], cfg);
                let mut y = Vec::with_capacity(c * oh * ow);
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let vals = (0..window[0]).flat_map(|wy| {
                                (0..window[1]).map(move |wx| {
                                    x[(ch * h + oy * stride[0] + wy) * w + ox * stride[1] + wx]
                                })
                            });
                            if is_max {
                                y.push(vals.max_by_key(|&v| cfg.signed(v)).unwrap());
                            } else {
                                let sum = vals.fold(0u64, |a, v| cfg.add(a, v));
                                y.push(cfg.trunc_floor(cfg.mul(sum, recip), f));
                            }
                        }
                    }
                }
                y
            }
            LayerKind::GlobalAvgPool => {
                let (c, h, w) = dims3(in_shape);
                let recip = reciprocal(h * w, cfg);
                (0..c)
                    .map(|ch| {
                        let sum = x[ch * h * w..(ch + 1) * h * w]
                            .iter()
                            .fold(0u64, |a, &v| cfg.add(a, v));
                        cfg.trunc_floor(cfg.mul(sum, recip), f)
                    })
                    .collect()
            }
            LayerKind::Concat => ins.iter().flat_map(|&j| outs[j].iter().copied()).collect(),
            LayerKind::Flatten | LayerKind::Output => x.to_vec(),
        };
        outs.push(y);
    }
    Ok(outs)
}

/// Fixed-point forward pass; the reference every secure run must match.
pub fn eval_fixed(
    graph: &ComputationGraph,
    weights: &WeightStore,
    input: &[f64],
    cfg: &FixedPointConfig,
) -> Result<Vec<u64>> {
    Ok(eval_fixed_trace(graph, weights, input, cfg)?
        .pop()
        .unwrap_or_default())
}

/// Elementwise maximum across views. Taken on logits; since the sigmoid is
/// monotone this equals the maximum of the probabilities.
pub fn aggregate_views(logits_per_view: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = logits_per_view
        .first()
        .ok_or_else(|| Error::InvalidInput("no views to aggregate".into()))?;
    let mut out = first.clone();
    for view in &logits_per_view[1..] {
        if view.len() != out.len() {
            return Err(Error::ShapeMismatch(format!(
                "view widths differ: {} vs {}",
                out.len(),
                view.len()
            )));
        }
        for (o, &v) in out.iter_mut().zip(view) {
            *o = o.max(v);
        }
    }
    Ok(out)
}

pub fn sigmoid(logits: &[f64]) -> Vec<f64> {
    logits
        .iter()
        .map(|&z| {
            if z >= 0.0 {
                1.0 / (1.0 + (-z).exp())
            } else {
                let e = z.exp();
                e / (1.0 + e)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{FloatTensor, LayerSpec};

    fn identity_conv() -> (ComputationGraph, WeightStore) {
        let g = ComputationGraph::new(
            "id",
            vec![1, 3, 3],
            9,
            vec![
                LayerSpec::new("x", LayerKind::Input, &[]),
                LayerSpec::new(
                    "c",
                    LayerKind::Conv2D {
                        out_channels: 1,
                        kernel: [1, 1],
                        stride: [1, 1],
                        padding: [0, 0],
                    },
                    &[],
                ),
                LayerSpec::new("f", LayerKind::Flatten, &[]),
                LayerSpec::new("o", LayerKind::Output, &[]),
            ],
        )
        .unwrap();
        let mut w = WeightStore::new();
        w.insert("c", "weight", FloatTensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap());
        w.insert("c", "bias", FloatTensor::new(vec![1], vec![0.0]).unwrap());
        (g, w)
    }

    #[test]
    fn identity_conv_passthrough() {
        let (g, w) = identity_conv();
        let input: Vec<f64> = (0..9).map(|i| i as f64 * 0.25 - 1.0).collect();
        assert_eq!(eval_float(&g, &w, &input).unwrap(), input);
        let cfg = FixedPointConfig::default();
        let fixed = eval_fixed(&g, &w, &input, &cfg).unwrap();
        assert_eq!(fixed, cfg.encode_all(&input).unwrap());
    }

    #[test]
    fn identity_dense_passthrough() {
        let g = ComputationGraph::new(
            "d",
            vec![3],
            3,
            vec![
                LayerSpec::new("x", LayerKind::Input, &[]),
                LayerSpec::new("d", LayerKind::Dense { out_features: 3 }, &[]),
                LayerSpec::new("o", LayerKind::Output, &[]),
            ],
        )
        .unwrap();
        let mut w = WeightStore::new();
        let eye = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        w.insert("d", "weight", FloatTensor::new(vec![3, 3], eye).unwrap());
        w.insert("d", "bias", FloatTensor::new(vec![3], vec![0.0; 3]).unwrap());
        let input = vec![0.5, -2.0, 3.25];
        assert_eq!(eval_float(&g, &w, &input).unwrap(), input);
    }

    #[test]
    fn wrong_input_len() {
        let (g, w) = identity_conv();
        assert!(matches!(
            eval_float(&g, &w, &[0.0; 8]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            eval_fixed(&g, &w, &[0.0; 10], &FixedPointConfig::default()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn views_aggregate_by_max() {
        assert_eq!(aggregate_views(&[vec![1.0, -2.0]]).unwrap(), vec![1.0, -2.0]);
        assert_eq!(
            aggregate_views(&[vec![1.0, -2.0], vec![0.0, 3.0]]).unwrap(),
            vec![1.0, 3.0]
        );
        assert!(aggregate_views(&[]).is_err());
        assert!(aggregate_views(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(&[0.0]), vec![0.5]);
        let s = sigmoid(&[1.0, 5.0, 20.0, 800.0]);
        assert!(s.windows(2).all(|w| w[0] < w[1] || w[1] == 1.0));
        assert_eq!(s[3], 1.0);
        for z in [-3.0, -0.1, 0.7, 12.0] {
            let (p, n) = (sigmoid(&[z])[0], sigmoid(&[-z])[0]);
            assert!((n - (1.0 - p)).abs() < 1e-15);
        }
        assert!(sigmoid(&[-800.0])[0] >= 0.0);
    }

    #[test]
    fn im2col_layout() {
        // 1x3x3, 2x2 kernel, no padding: 4 rows x 4 columns
        let x: Vec<u32> = (0..9).collect();
        let (cols, k, p) = im2col(&x, (1, 3, 3), [2, 2], [1, 1], [0, 0], 0);
        assert_eq!((k, p), (4, 4));
        assert_eq!(&cols[0..4], &[0, 1, 3, 4]);
        assert_eq!(&cols[12..16], &[4, 5, 7, 8]);
        let (cols, _, p) = im2col(&x, (1, 3, 3), [3, 3], [1, 1], [1, 1], 99);
        assert_eq!(p, 9);
        assert_eq!(cols[0], 99);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn view_max_commutes_with_sigmoid(a in -30.0f64..30.0, b in -30.0f64..30.0) {
                let m = aggregate_views(&[vec![a], vec![b]]).unwrap();
                let s = sigmoid(&[a, b]);
                prop_assert_eq!(sigmoid(&m)[0], s[0].max(s[1]));
            }

            #[test]
            fn argmax_invariant_under_sigmoid(z in proptest::collection::vec(-20.0f64..20.0, 1..16)) {
                let argmax = |v: &[f64]| v.iter().enumerate()
                    .fold(0, |best, (i, &x)| if x > v[best] { i } else { best });
                prop_assert_eq!(argmax(&z), argmax(&sigmoid(&z)));
            }
        }
    }
}
