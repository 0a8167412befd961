// SPDX-License-Identifier: Apache-2.0

//! Full-graph secure evaluation.
//!
//! Schedule per layer kind, mirroring `eval_fixed`:
//!
//! * Dense / Conv2D: Beaver matmul (conv lowered by im2col), truncate, add
//!   the bias share.
//! * BatchNormFolded: elementwise product with the per-channel scale,
//!   truncate, add the shift share.
//! * AvgPool / GlobalAvgPool: local window sum times the public encoded
//!   reciprocal, truncate.
//! * ReLU, MaxPool: sign extraction and Beaver products.
//! * Concat, Flatten, Output: local.

use std::io::{Read, Write};

use rand::Rng;

use super::{ring_from_bytes, ring_to_bytes, ProtocolState, TruncMode};
use crate::error::{Error, Result};
use crate::graph::eval::reciprocal;
use crate::graph::{im2col, pool_windows, ComputationGraph, EncodedLayer, EncodedWeights, LayerKind};
use crate::net::MsgType;
use crate::ring::FixedPointConfig;
use crate::sharing::{add_vec, random_ring, sub_vec, PartyId, RandomnessBudget};

/// What each party brings to the computation.
#[derive(Debug, Clone, Copy)]
pub enum LocalSecret<'a> {
    /// Model owner: encoded parameters by layer position.
    Weights(&'a EncodedWeights),
    /// Data owner: encoded input.
    Input(&'a [u64]),
}

fn dims3(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2])
}

/// `(mult, add)` element counts of every layer.
fn param_sizes(graph: &ComputationGraph) -> Vec<(usize, usize)> {
    (0..graph.layers().len())
        .map(|i| {
            let shapes = graph.param_shapes(i);
            let size = |name: &str| shapes.get(name).map(|s| s.iter().product()).unwrap_or(0);
            match graph.layers()[i].kind {
                LayerKind::BatchNormFolded => (size("scale"), size("shift")),
                _ => (size("weight"), size("bias")),
            }
        })
        .collect()
}

fn trunc_cost(budget: &mut RandomnessBudget, n: usize, cfg: &FixedPointConfig, trunc: TruncMode) {
    if trunc == TruncMode::Faithful {
        budget.truncpairs += n;
        budget.binary += n * (cfg.f() as usize - 1);
        budget.dabits += n;
    }
}

fn relu_cost(budget: &mut RandomnessBudget, n: usize, cfg: &FixedPointConfig) {
    let k = cfg.k() as usize;
    budget.dabits += n * (k + 1);
    budget.binary += n * (k - 2);
    budget.elementwise += n;
}

/// Exact correlated randomness consumed by [`run_graph_secure`].
pub fn plan_budget(graph: &ComputationGraph, cfg: &FixedPointConfig, trunc: TruncMode) -> RandomnessBudget {
    let mut b = RandomnessBudget::default();
    for (i, layer) in graph.layers().iter().enumerate() {
        let out_len: usize = graph.shape(i).iter().product();
        let in_shape = graph
            .input_positions(i)
            .first()
            .map(|&j| graph.shape(j).to_vec())
            .unwrap_or_default();
        match &layer.kind {
            LayerKind::Dense { out_features } => {
                b.matmul.push((*out_features, in_shape[0], 1));
                trunc_cost(&mut b, out_len, cfg, trunc);
            }
            LayerKind::Conv2D {
                out_channels,
                kernel,
                ..
            } => {
                let kk = in_shape[0] * kernel[0] * kernel[1];
                let p = out_len / out_channels;
                b.matmul.push((*out_channels, kk, p));
                trunc_cost(&mut b, out_len, cfg, trunc);
            }
            LayerKind::BatchNormFolded => {
                b.elementwise += out_len;
                trunc_cost(&mut b, out_len, cfg, trunc);
            }
            LayerKind::AvgPool { .. } | LayerKind::GlobalAvgPool => {
                trunc_cost(&mut b, out_len, cfg, trunc);
            }
            LayerKind::ReLU => relu_cost(&mut b, out_len, cfg),
            LayerKind::MaxPool { window, .. } => {
                relu_cost(&mut b, out_len * (window[0] * window[1] - 1), cfg)
            }
            LayerKind::Input | LayerKind::Concat | LayerKind::Flatten | LayerKind::Output => {}
        }
    }
    b
}

/// Secret-shares the input and the parameters in one round: each owner
/// keeps a uniform mask as its share and sends `value - mask`.
pub fn share_inputs<T: Read + Write, R: Rng + ?Sized>(
    state: &mut ProtocolState<'_, T>,
    graph: &ComputationGraph,
    secret: LocalSecret<'_>,
    rng: &mut R,
) -> Result<(Vec<u64>, Vec<EncodedLayer>)> {
    let cfg = state.config();
    let sizes = param_sizes(graph);
    let param_total: usize = sizes.iter().map(|(m, a)| m + a).sum();
    state.channel().set_layer("input_sharing");
    match (state.party(), secret) {
        (PartyId::P1, LocalSecret::Input(x)) => {
            if x.len() != graph.input_len() {
                return Err(Error::ShapeMismatch(format!(
                    "input has {} values, graph expects {}",
                    x.len(),
                    graph.input_len()
                )));
            }
            let mask = random_ring(&cfg, x.len(), rng);
            let send = ring_to_bytes(&cfg, &sub_vec(&cfg, x, &mask));
            let got = state.channel().exchange(MsgType::Open, &send)?;
            let flat = ring_from_bytes(&cfg, &got, param_total)?;
            let mut params = Vec::with_capacity(sizes.len());
            let mut at = 0;
            for (m, a) in sizes {
                params.push(EncodedLayer {
                    mult: flat[at..at + m].to_vec(),
                    add: flat[at + m..at + m + a].to_vec(),
                });
                at += m + a;
            }
            Ok((mask, params))
        }
        (PartyId::P0, LocalSecret::Weights(w)) => {
            if w.layers.len() != sizes.len()
                || w.layers.iter().zip(&sizes).any(|(l, &(m, a))| l.mult.len() != m || l.add.len() != a)
            {
                return Err(Error::ShapeMismatch("encoded weights do not match the graph".into()));
            }
            let mut mine = Vec::with_capacity(sizes.len());
            let mut send = Vec::with_capacity(param_total);
            for l in &w.layers {
                let mm = random_ring(&cfg, l.mult.len(), rng);
                let ma = random_ring(&cfg, l.add.len(), rng);
                send.extend(sub_vec(&cfg, &l.mult, &mm));
                send.extend(sub_vec(&cfg, &l.add, &ma));
                mine.push(EncodedLayer { mult: mm, add: ma });
            }
            let got = state.channel().exchange(MsgType::Open, &ring_to_bytes(&cfg, &send))?;
            let input = ring_from_bytes(&cfg, &got, graph.input_len())?;
            Ok((input, mine))
        }
        (party, _) => Err(Error::InvalidInput(format!(
            "party {} brought the other party's kind of secret",
            party.index()
        ))),
    }
}

fn at_layer<T>(layer: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Exhausted { .. } => Error::ExhaustedAt {
            layer: layer.to_string(),
            source: Box::new(e),
        },
        other => other,
    })
}

/// Evaluates `graph` on shared input and parameters; returns this party's
/// share of the Output layer.
pub fn run_graph_secure<T: Read + Write, R: Rng + ?Sized>(
    state: &mut ProtocolState<'_, T>,
    graph: &ComputationGraph,
    secret: LocalSecret<'_>,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let (x0, params) = share_inputs(state, graph, secret, rng)?;
    let cfg = state.config();
    let mut outs: Vec<Vec<u64>> = Vec::with_capacity(graph.layers().len());
    for (i, layer) in graph.layers().iter().enumerate() {
        state.channel().set_layer(&layer.id);
        let ins = graph.input_positions(i);
        let x = ins.first().map(|&j| outs[j].as_slice()).unwrap_or(&[]);
        let in_shape = ins.first().map(|&j| graph.shape(j)).unwrap_or(&[]);
        let p = &params[i];
        let y = at_layer(&layer.id, eval_layer(state, graph, i, x, in_shape, &ins, &outs, p, &x0, &cfg))?;
        outs.push(y);
    }
    Ok(outs.pop().unwrap_or_default())
}

#[allow(clippy::too_many_arguments)]
fn eval_layer<T: Read + Write>(
    state: &mut ProtocolState<'_, T>,
    graph: &ComputationGraph,
    i: usize,
    x: &[u64],
    in_shape: &[usize],
    ins: &[usize],
    outs: &[Vec<u64>],
    p: &EncodedLayer,
    x0: &[u64],
    cfg: &FixedPointConfig,
) -> Result<Vec<u64>> {
    let layer = &graph.layers()[i];
    Ok(match &layer.kind {
        LayerKind::Input => x0.to_vec(),
        LayerKind::Dense { out_features } => {
            let z = state.matmul(&p.mult, x, *out_features, x.len(), 1)?;
            let z = state.trunc(&z)?;
            add_vec(cfg, &z, &p.add)
        }
        LayerKind::Conv2D {
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let (cols, kk, pp) = im2col(x, dims3(in_shape), *kernel, *stride, *padding, 0u64);
            let z = state.matmul(&p.mult, &cols, *out_channels, kk, pp)?;
            let z = state.trunc(&z)?;
            z.iter()
                .enumerate()
                .map(|(j, &v)| cfg.add(v, p.add[j / pp]))
                .collect()
        }
        LayerKind::BatchNormFolded => {
            let per = x.len() / in_shape[0];
            let scale: Vec<u64> = (0..x.len()).map(|j| p.mult[j / per]).collect();
            let z = state.mul(x, &scale)?;
            let z = state.trunc(&z)?;
            z.iter()
                .enumerate()
                .map(|(j, &v)| cfg.add(v, p.add[j / per]))
                .collect()
        }
        LayerKind::ReLU => state.relu(x)?,
        LayerKind::MaxPool { window, stride } => {
            state.maxpool(x, &pool_windows(dims3(in_shape), *window, *stride))?
        }
        LayerKind::AvgPool { window, stride } => {
            let windows = pool_windows(dims3(in_shape), *window, *stride);
            let recip = reciprocal(window[0] * window[1], cfg);
            let n = windows[0].len();
            let sums: Vec<u64> = (0..n)
                .map(|o| {
                    let s = windows.iter().fold(0u64, |a, w| cfg.add(a, x[w[o]]));
                    cfg.mul(s, recip)
                })
                .collect();
            state.trunc(&sums)?
        }
        LayerKind::GlobalAvgPool => {
            let (c, h, w) = dims3(in_shape);
            let recip = reciprocal(h * w, cfg);
            let sums: Vec<u64> = (0..c)
                .map(|ch| {
                    let s = x[ch * h * w..(ch + 1) * h * w]
                        .iter()
                        .fold(0u64, |a, &v| cfg.add(a, v));
                    cfg.mul(s, recip)
                })
                .collect();
            state.trunc(&sums)?
        }
        LayerKind::Concat => ins.iter().flat_map(|&j| outs[j].iter().copied()).collect(),
        LayerKind::Flatten | LayerKind::Output => x.to_vec(),
    })
}

/// Delivers the output to the data owner only: party 0 sends its share in
/// an OUTPUT message and learns nothing; party 1 returns the opened values.
pub fn reveal_output<T: Read + Write>(
    state: &mut ProtocolState<'_, T>,
    shares: &[u64],
) -> Result<Option<Vec<u64>>> {
    let cfg = state.config();
    state.channel().set_layer("output");
    match state.party() {
        PartyId::P0 => {
            state
                .channel()
                .send(MsgType::Output, &ring_to_bytes(&cfg, shares))?;
            Ok(None)
        }
        PartyId::P1 => {
            let got = state.channel().recv(MsgType::Output)?;
            let peer = ring_from_bytes(&cfg, &got, shares.len())?;
            Ok(Some(add_vec(&cfg, shares, &peer)))
        }
    }
}
