// SPDX-License-Identifier: Apache-2.0

//! Python bindings: fixed-point encoding, bundles and weight stripping,
//! plaintext evaluation, an in-process secure session and the statistics
//! used to compare secure with insecure outputs.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sealedinfer::eval::{self, CompareOptions, LabeledScores};
use sealedinfer::graph::{self as model, GraphBundle};
use sealedinfer::net::{run_local_pair, Mode, Preprocessing, Role, SessionParams};
use sealedinfer::protocols::plan_budget;
use sealedinfer::ring;
use sealedinfer::sharing::dealer::{dealer_generate, requests_for};
use sealedinfer::sharing::{PartyId, RandomnessStore};

fn py_err(e: sealedinfer::Error) -> PyErr {
    match e {
        sealedinfer::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e if e.is_protocol() => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// Parses a JSON string with Python's own `json` module.
fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

/// Signed fixed-point numbers in the ring of integers modulo 2^k.
#[pyclass(frozen, from_py_object)]
#[derive(Clone, Copy)]
struct FixedPoint {
    cfg: ring::FixedPointConfig,
}

#[pymethods]
impl FixedPoint {
    #[new]
    #[pyo3(signature = (k = 64, f = 12))]
    fn new(k: u32, f: u32) -> PyResult<Self> {
        Ok(FixedPoint { cfg: ring::FixedPointConfig::new(k, f).map_err(py_err)? })
    }

    #[getter]
    fn k(&self) -> u32 {
        self.cfg.k()
    }

    #[getter]
    fn f(&self) -> u32 {
        self.cfg.f()
    }

    fn encode(&self, values: Vec<f64>) -> PyResult<Vec<u64>> {
        self.cfg.encode_all(&values).map_err(py_err)
    }

    fn decode(&self, elements: Vec<u64>) -> Vec<f64> {
        self.cfg.decode_all(&elements)
    }

    fn __repr__(&self) -> String {
        format!("FixedPoint(k={}, f={})", self.cfg.k(), self.cfg.f())
    }
}

/// A computation graph, with weights on the model owner's side.
#[pyclass(frozen)]
struct Bundle {
    inner: GraphBundle,
}

#[pymethods]
impl Bundle {
    /// Parses a manifest or bundle document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Bundle { inner: model::load_manifest(text.as_bytes()).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Ok(Bundle { inner: model::load_manifest(&bytes).map_err(py_err)? })
    }

    /// Canonical serialization; byte-stable for equal bundles.
    fn to_json(&self) -> String {
        String::from_utf8(model::save_bundle(&self.inner)).expect("bundles serialize to UTF-8")
    }

    /// The client bundle: same graph, no weights.
    fn strip(&self) -> Bundle {
        Bundle { inner: model::strip_weights(&self.inner) }
    }

    #[getter]
    fn is_stripped(&self) -> bool {
        model::verify_stripped(&self.inner)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.graph.name().to_string()
    }

    #[getter]
    fn graph_hash(&self) -> String {
        self.inner.graph_hash()
    }

    #[getter]
    fn input_shape(&self) -> Vec<usize> {
        self.inner.graph.input_shape().to_vec()
    }

    #[getter]
    fn output_width(&self) -> usize {
        self.inner.graph.output_width()
    }

    #[getter]
    fn weight_tensors(&self) -> usize {
        self.inner.weights.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Bundle(name={:?}, layers={}, weight_tensors={})",
            self.inner.graph.name(),
            self.inner.graph.layers().len(),
            self.inner.weights.len()
        )
    }
}

/// Plaintext fixed-point evaluation; returns ring elements.
#[pyfunction]
fn eval_fixed(py: Python<'_>, bundle: &Bundle, input: Vec<f64>, fp: FixedPoint) -> PyResult<Vec<u64>> {
    let b = &bundle.inner;
    py.detach(|| model::eval_fixed(&b.graph, &b.weights, &input, &fp.cfg)).map_err(py_err)
}

#[pyfunction]
fn eval_float(py: Python<'_>, bundle: &Bundle, input: Vec<f64>) -> PyResult<Vec<f64>> {
    let b = &bundle.inner;
    py.detach(|| model::eval_float(&b.graph, &b.weights, &input)).map_err(py_err)
}

#[pyfunction]
fn sigmoid(logits: Vec<f64>) -> Vec<f64> {
    model::sigmoid(&logits)
}

/// Runs both parties in this process over a socket pair. Returns a dict
/// with the data owner's logits and both parties' traffic counters.
#[pyfunction]
#[pyo3(signature = (bundle, input, fp, mode = "dealer", seed = 0, he_bits = 2048))]
fn secure_inference<'py>(
    py: Python<'py>,
    bundle: &Bundle,
    input: Vec<f64>,
    fp: FixedPoint,
    mode: &str,
    seed: u64,
    he_bits: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let mode: Mode = mode.parse().map_err(py_err)?;
    let server = &bundle.inner;
    if server.weights.is_empty() {
        return Err(PyValueError::new_err("secure_inference needs the server bundle"));
    }
    let cfg = fp.cfg;
    let (a, b) = py.detach(|| {
        let client = model::strip_weights(server);
        let (p0, p1) = match mode {
            Mode::Dealer => {
                use rand::SeedableRng;
                let budget = plan_budget(&server.graph, &cfg, mode.trunc_mode());
                let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
                let (m0, m1) = dealer_generate(&requests_for(&budget, &cfg), &cfg, &mut rng);
                (
                    Preprocessing::Store(RandomnessStore::from_sections(PartyId::P0, cfg, m0)?),
                    Preprocessing::Store(RandomnessStore::from_sections(PartyId::P1, cfg, m1)?),
                )
            }
            Mode::TwoPcHe => (
                Preprocessing::He { modulus_bits: he_bits },
                Preprocessing::He { modulus_bits: he_bits },
            ),
        };
        let params = |role, bundle, input, preprocessing| SessionParams {
            role,
            bundle,
            input,
            fixed_point: cfg,
            mode,
            randomness_label: format!("py-{seed}"),
            preprocessing,
            seed: Some(seed),
            accept_label_prefix: false,
        };
        Ok::<_, sealedinfer::Error>(run_local_pair(
            params(Role::ModelOwner, server, None, p0),
            params(Role::DataOwner, &client, Some(&input), p1),
        ))
    })
    .map_err(py_err)?;
    let (server_out, client_out) = (a.map_err(py_err)?, b.map_err(py_err)?);
    let d = PyDict::new(py);
    d.set_item("logits", client_out.logits)?;
    d.set_item("logits_ring", client_out.logits_ring)?;
    d.set_item("bytes_sent", client_out.stats.bytes_sent)?;
    d.set_item("bytes_received", client_out.stats.bytes_received)?;
    d.set_item("server_bytes_sent", server_out.stats.bytes_sent)?;
    d.set_item("server_bytes_received", server_out.stats.bytes_received)?;
    d.set_item("rounds", client_out.stats.rounds)?;
    d.set_item("wall_time", client_out.stats.wall_time)?;
    Ok(d)
}

fn labeled(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<LabeledScores> {
    LabeledScores::new(scores, labels, "scores").map_err(py_err)
}

#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    eval::auroc(&labeled(scores, labels)?).map_err(py_err)
}

/// Percentile bootstrap interval for the AUROC.
#[pyfunction]
#[pyo3(signature = (scores, labels, n_boot = 1000, seed = 0))]
fn bootstrap_ci(scores: Vec<f64>, labels: Vec<u8>, n_boot: usize, seed: u64) -> PyResult<(f64, f64)> {
    eval::bootstrap_ci(&labeled(scores, labels)?, n_boot, seed).map_err(py_err)
}

/// Two-sample Kolmogorov-Smirnov test; returns `(D, p)`.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = eval::ks_two_sample(&a, &b).map_err(py_err)?;
    Ok((r.statistic, r.p_value))
}

#[pyfunction]
fn brier(probs: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    eval::brier(&probs, &labels).map_err(py_err)
}

/// Per-class comparison of insecure and secure probabilities. Returns the
/// report as a dict plus its rendered table.
#[pyfunction]
#[pyo3(signature = (insecure, secure, labels, class_names, n_boot = 1000, seed = 0))]
fn compare_runs<'py>(
    py: Python<'py>,
    insecure: Vec<Vec<f64>>,
    secure: Vec<Vec<f64>>,
    labels: Vec<Vec<u8>>,
    class_names: Vec<String>,
    n_boot: usize,
    seed: u64,
) -> PyResult<(Bound<'py, PyAny>, String)> {
    let report = eval::compare_runs(&insecure, &secure, &labels, &class_names, None, CompareOptions { n_boot, seed })
        .map_err(py_err)?;
    let value = serde_json::to_value(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((json_to_py(py, &value)?, report.to_table()))
}

#[pymodule]
fn sealedinfer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<FixedPoint>()?;
    m.add_class::<Bundle>()?;
    m.add_function(wrap_pyfunction!(eval_fixed, m)?)?;
    m.add_function(wrap_pyfunction!(eval_float, m)?)?;
    m.add_function(wrap_pyfunction!(sigmoid, m)?)?;
    m.add_function(wrap_pyfunction!(secure_inference, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(brier, m)?)?;
    m.add_function(wrap_pyfunction!(compare_runs, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
