// SPDX-License-Identifier: Apache-2.0

//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use sealedinfer::graph::{
    load_manifest, strip_weights, ComputationGraph, FloatTensor, GraphBundle, LayerKind, LayerSpec,
    WeightStore,
};
use sealedinfer::net::{run_local_pair, InferenceOutcome, Mode, Preprocessing, Role, SessionParams};
use sealedinfer::protocols::{plan_budget, TruncMode};
use sealedinfer::ring::FixedPointConfig;
use sealedinfer::sharing::dealer::{dealer_generate, requests_for};
use sealedinfer::sharing::{PartyId, RandomnessStore, Section};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_paths() -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(fixtures_dir())
        .expect("fixtures directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    out.sort();
    out
}

pub fn load_fixture(name: &str) -> GraphBundle {
    let bytes = std::fs::read(fixtures_dir().join(format!("{name}.json"))).expect("fixture");
    load_manifest(&bytes).expect("fixture parses")
}

/// How weights are drawn for a random graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScale {
    /// Row L1 norms in `[0.5, 1.5]`: activations stay well inside the
    /// range where faithful truncation is exact at k = 32, f = 12.
    Moderate,
    /// Row L1 norms and BN scales at most 0.9: errors never grow from
    /// layer to layer, so each truncation adds at most one unit.
    Contracting,
}

#[derive(Clone, Copy)]
enum Shape {
    Img(usize, usize, usize),
    Vec(usize),
}

impl Shape {
    fn len(self) -> usize {
        match self {
            Shape::Img(c, h, w) => c * h * w,
            Shape::Vec(n) => n,
        }
    }
}

/// Largest activation tensor the generator will produce.
const MAX_ACTIVATIONS: usize = 192;

/// A random valid graph with between one and six layers between Input and
/// Output, channel and feature dims at most 16, and random weights.
pub fn random_graph(rng: &mut impl Rng, name: &str, scale: WeightScale) -> GraphBundle {
    let input = if rng.gen_bool(0.75) {
        let s = rng.gen_range(2..=5);
        Shape::Img(rng.gen_range(1..=3), s, s)
    } else {
        Shape::Vec(rng.gen_range(2..=16))
    };
    let input_shape = match input {
        Shape::Img(c, h, w) => vec![c, h, w],
        Shape::Vec(n) => vec![n],
    };
    let total = rng.gen_range(1..=6usize);
    let mut layers = vec![LayerSpec::new("x", LayerKind::Input, &[])];
    let mut cur = input;
    let mut cur_id = "x".to_string();
    let mut fresh = 0;
    let mut next_id = || {
        fresh += 1;
        format!("l{fresh}")
    };
    let head = |s: Shape| if matches!(s, Shape::Img(..)) { 2 } else { 1 };
    let mut used = 0;
    while used + head(cur) < total.max(head(cur)) {
        let room = total - used - head(cur);
        let id = next_id();
        let (kind, inputs, shape, cost): (LayerKind, Vec<String>, Shape, usize) = match cur {
            Shape::Img(c, h, w) => match rng.gen_range(0..6) {
                0 => {
                    let k = rng.gen_range(1..=3usize.min(h + 2));
                    let p = rng.gen_range(0..=1);
                    let s = rng.gen_range(1..=2);
                    if h + 2 * p < k {
                        continue;
                    }
                    let o = (h + 2 * p - k) / s + 1;
                    let oc = rng.gen_range(1..=16usize).min(MAX_ACTIVATIONS / (o * o)).max(1);
                    (
                        LayerKind::Conv2D {
                            out_channels: oc,
                            kernel: [k, k],
                            stride: [s, s],
                            padding: [p, p],
                        },
                        vec![cur_id.clone()],
                        Shape::Img(oc, o, o),
                        1,
                    )
                }
                1 => (LayerKind::ReLU, vec![cur_id.clone()], cur, 1),
                2 | 3 if h >= 2 => {
                    let s = rng.gen_range(1..=2);
                    let o = (h - 2) / s + 1;
                    let kind = if rng.gen_bool(0.5) {
                        LayerKind::MaxPool { window: [2, 2], stride: [s, s] }
                    } else {
                        LayerKind::AvgPool { window: [2, 2], stride: [s, s] }
                    };
                    (kind, vec![cur_id.clone()], Shape::Img(c, o, o), 1)
                }
                4 => (LayerKind::BatchNormFolded, vec![cur_id.clone()], cur, 1),
                5 if room >= 2 && c < (MAX_ACTIVATIONS / (h * w)).min(16) => {
                    let oc = rng.gen_range(1..=(MAX_ACTIVATIONS / (h * w)).min(16) - c);
                    let branch = next_id();
                    layers.push(LayerSpec::new(
                        branch.clone(),
                        LayerKind::Conv2D {
                            out_channels: oc,
                            kernel: [3, 3],
                            stride: [1, 1],
                            padding: [1, 1],
                        },
                        &[&cur_id],
                    ));
                    used += 1;
                    (LayerKind::Concat, vec![cur_id.clone(), branch], Shape::Img(c + oc, h, w), 1)
                }
                _ => continue,
            },
            Shape::Vec(n) => match rng.gen_range(0..3) {
                0 => {
                    let o = rng.gen_range(1..=16);
                    (LayerKind::Dense { out_features: o }, vec![cur_id.clone()], Shape::Vec(o), 1)
                }
                1 => (LayerKind::ReLU, vec![cur_id.clone()], cur, 1),
                _ if room >= 2 && n < 16 => {
                    let o = rng.gen_range(1..=(16 - n));
                    let branch = next_id();
                    layers.push(LayerSpec::new(
                        branch.clone(),
                        LayerKind::Dense { out_features: o },
                        &[&cur_id],
                    ));
                    used += 1;
                    (LayerKind::Concat, vec![cur_id.clone(), branch], Shape::Vec(n + o), 1)
                }
                _ => continue,
            },
        };
        let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
        layers.push(LayerSpec::new(id.clone(), kind, &refs));
        used += cost;
        cur = shape;
        cur_id = id;
        debug_assert!(cur.len() <= MAX_ACTIVATIONS + 16);
    }
    if let Shape::Img(c, h, w) = cur {
        let id = next_id();
        let kind = if rng.gen_bool(0.5) { LayerKind::GlobalAvgPool } else { LayerKind::Flatten };
        cur = if kind == LayerKind::GlobalAvgPool { Shape::Vec(c) } else { Shape::Vec(c * h * w) };
        layers.push(LayerSpec::new(id.clone(), kind, &[&cur_id]));
        cur_id = id;
    }
    let _ = cur;
    let out_width = rng.gen_range(1..=4);
    let id = next_id();
    layers.push(LayerSpec::new(id.clone(), LayerKind::Dense { out_features: out_width }, &[&cur_id]));
    layers.push(LayerSpec::new("out", LayerKind::Output, &[&id]));

    let graph = ComputationGraph::new(name, input_shape, out_width, layers).expect("generated graph is valid");
    let weights = random_weights(&graph, rng, scale);
    GraphBundle::server(graph, weights).expect("weights fit the graph")
}

fn random_weights(graph: &ComputationGraph, rng: &mut impl Rng, scale: WeightScale) -> WeightStore {
    let (lo, hi, bn) = match scale {
        WeightScale::Moderate => (0.5, 1.5, 1.5),
        WeightScale::Contracting => (0.3, 0.9, 0.9),
    };
    let mut store = WeightStore::new();
    for (i, layer) in graph.layers().iter().enumerate() {
        let shapes = graph.param_shapes(i);
        match layer.kind {
            LayerKind::Dense { .. } | LayerKind::Conv2D { .. } => {
                let ws = &shapes["weight"];
                let rows = ws[0];
                let per_row: usize = ws[1..].iter().product();
                let mut data = Vec::with_capacity(rows * per_row);
                for _ in 0..rows {
                    let row: Vec<f64> = (0..per_row).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let l1: f64 = row.iter().map(|v| v.abs()).sum::<f64>().max(1e-9);
                    let target = rng.gen_range(lo..hi);
                    data.extend(row.iter().map(|v| (v * target / l1) as f32));
                }
                store.insert(&layer.id, "weight", FloatTensor::new(ws.clone(), data).unwrap());
                let bias = (0..rows).map(|_| rng.gen_range(-0.25..0.25) as f32).collect();
                store.insert(&layer.id, "bias", FloatTensor::new(vec![rows], bias).unwrap());
            }
            LayerKind::BatchNormFolded => {
                let n = shapes["scale"][0];
                let s = (0..n).map(|_| rng.gen_range(-bn..bn) as f32).collect();
                let t = (0..n).map(|_| rng.gen_range(-0.25..0.25) as f32).collect();
                store.insert(&layer.id, "scale", FloatTensor::new(vec![n], s).unwrap());
                store.insert(&layer.id, "shift", FloatTensor::new(vec![n], t).unwrap());
            }
            _ => {}
        }
    }
    store
}

pub fn random_input(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Dealer material for one inference of `bundle`.
pub fn dealer_material(
    bundle: &GraphBundle,
    cfg: &FixedPointConfig,
    seed: u64,
) -> (Vec<Section>, Vec<Section>) {
    let budget = plan_budget(&bundle.graph, cfg, TruncMode::Faithful);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    dealer_generate(&requests_for(&budget, cfg), cfg, &mut rng)
}

pub fn dealer_stores(bundle: &GraphBundle, cfg: &FixedPointConfig, seed: u64) -> (RandomnessStore, RandomnessStore) {
    let (m0, m1) = dealer_material(bundle, cfg, seed);
    (
        RandomnessStore::from_sections(PartyId::P0, *cfg, m0).unwrap(),
        RandomnessStore::from_sections(PartyId::P1, *cfg, m1).unwrap(),
    )
}

/// One in-process session in dealer mode. Returns (model owner, data owner).
pub fn dealer_session(
    server: &GraphBundle,
    input: &[f64],
    cfg: FixedPointConfig,
    seed: u64,
) -> (InferenceOutcome, InferenceOutcome) {
    let client = strip_weights(server);
    let (s0, s1) = dealer_stores(server, &cfg, seed);
    let label = format!("session-{seed}");
    let (a, b) = run_local_pair(
        SessionParams {
            role: Role::ModelOwner,
            bundle: server,
            input: None,
            fixed_point: cfg,
            mode: Mode::Dealer,
            randomness_label: label.clone(),
            preprocessing: Preprocessing::Store(s0),
            seed: Some(seed),
            accept_label_prefix: false,
        },
        SessionParams {
            role: Role::DataOwner,
            bundle: &client,
            input: Some(input),
            fixed_point: cfg,
            mode: Mode::Dealer,
            randomness_label: label,
            preprocessing: Preprocessing::Store(s1),
            seed: Some(seed),
            accept_label_prefix: false,
        },
    );
    (a.expect("model owner session"), b.expect("data owner session"))
}

/// One in-process session with homomorphic preprocessing.
pub fn he_session(
    server: &GraphBundle,
    input: &[f64],
    cfg: FixedPointConfig,
    modulus_bits: u64,
    seed: u64,
) -> (InferenceOutcome, InferenceOutcome) {
    let client = strip_weights(server);
    let label = format!("he-{seed}");
    let params = |role, bundle, input| SessionParams {
        role,
        bundle,
        input,
        fixed_point: cfg,
        mode: Mode::TwoPcHe,
        randomness_label: label.clone(),
        preprocessing: Preprocessing::He { modulus_bits },
        seed: Some(seed),
        accept_label_prefix: false,
    };
    let (a, b) = run_local_pair(
        params(Role::ModelOwner, server, None),
        params(Role::DataOwner, &client, Some(input)),
    );
    (a.expect("model owner session"), b.expect("data owner session"))
}
