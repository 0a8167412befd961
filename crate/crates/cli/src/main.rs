// SPDX-License-Identifier: Apache-2.0

//! `sealedinfer`: compile a model into server and client bundles, deal
//! correlated randomness, run the two parties, evaluate in the clear and
//! compare secure against insecure outputs.

mod exit;
mod files;
mod run_manifest;

use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use exit::usage;
use files::{load_images, read_bundle, read_json, read_outputs, write_json, write_output, ImageOutput, LabelFile};
use run_manifest::{parse_mode, resolve_endpoint, RunManifest};
use sealedinfer::eval::{compare_runs, CompareOptions, CostSummary};
use sealedinfer::graph::{eval_fixed, eval_float, save_bundle, sigmoid, strip_weights, verify_stripped, BundleRole};
use sealedinfer::net::{run_batch, run_secure_inference, Mode, Preprocessing, Role, SessionParams, SessionStats};
use sealedinfer::protocols::plan_budget;
use sealedinfer::ring::FixedPointConfig;
use sealedinfer::sharing::crnd::{party_file, write_file};
use sealedinfer::sharing::dealer::{dealer_generate, requests_for, DealerRequest};
use sealedinfer::sharing::{PartyId, Section, TripleFlavor};

#[derive(Parser)]
#[command(name = "sealedinfer", version, about = "Two-party secure CNN inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct RingArgs {
    /// Ring bit width.
    #[arg(long, env = "SEALEDINFER_K", default_value_t = 64)]
    k: u32,
    /// Fractional bits.
    #[arg(long, env = "SEALEDINFER_F", default_value_t = 12)]
    f: u32,
}

impl RingArgs {
    fn config(self) -> Result<FixedPointConfig> {
        FixedPointConfig::new(self.k, self.f).map_err(|e| usage(e.to_string()))
    }
}

#[derive(Args, Clone)]
struct SessionArgs {
    /// Run settings file; flags given here override its fields.
    #[arg(long, env = "SEALEDINFER_RUN_MANIFEST")]
    run_manifest: Option<PathBuf>,
    #[arg(long, env = "SEALEDINFER_BUNDLE")]
    bundle: Option<PathBuf>,
    /// dealer or 2pc-he.
    #[arg(long, env = "SEALEDINFER_MODE")]
    mode: Option<String>,
    /// host:port
    #[arg(long, env = "SEALEDINFER_ENDPOINT")]
    endpoint: Option<String>,
    /// Directory with the .crnd files (dealer mode).
    #[arg(long, env = "SEALEDINFER_RANDOMNESS")]
    randomness: Option<PathBuf>,
    /// Randomness label; image i of a run uses `<label>-<i>`.
    #[arg(long, env = "SEALEDINFER_LABEL")]
    label: Option<String>,
    #[arg(long, env = "SEALEDINFER_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "SEALEDINFER_OUT")]
    out: Option<PathBuf>,
    /// Paillier modulus size for 2pc-he preprocessing.
    #[arg(long, env = "SEALEDINFER_HE_BITS", default_value_t = 2048)]
    he_bits: u64,
    #[command(flatten)]
    ring: RingArgs,
}

/// Session settings after merging flags with the run manifest.
struct Resolved {
    bundle: PathBuf,
    mode: Mode,
    endpoint: String,
    randomness: Option<PathBuf>,
    label: String,
    seed: Option<u64>,
    out: PathBuf,
    inputs: Option<PathBuf>,
    he_bits: u64,
    cfg: FixedPointConfig,
}

impl SessionArgs {
    fn resolve(&self, inputs: Option<PathBuf>) -> Result<Resolved> {
        let m = match &self.run_manifest {
            Some(p) => RunManifest::load(p)?,
            None => RunManifest::default(),
        };
        let mode = parse_mode(self.mode.as_deref().or(m.mode.as_deref()).unwrap_or("dealer"))?;
        let endpoint = self
            .endpoint
            .clone()
            .or(m.endpoint)
            .ok_or_else(|| usage("--endpoint is required"))?;
        resolve_endpoint(&endpoint)?;
        let randomness = self.randomness.clone().or(m.randomness_dir);
        if mode == Mode::Dealer && randomness.is_none() {
            bail!(usage("dealer mode needs --randomness DIR"));
        }
        Ok(Resolved {
            bundle: self.bundle.clone().or(m.bundle).ok_or_else(|| usage("--bundle is required"))?,
            mode,
            endpoint,
            randomness,
            label: self.label.clone().or(m.randomness_label).unwrap_or_else(|| "session".into()),
            seed: self.seed.or(m.seed),
            out: self.out.clone().or(m.out).unwrap_or_else(|| PathBuf::from(".")),
            inputs: inputs.or(m.inputs),
            he_bits: self.he_bits,
            cfg: self.ring.config()?,
        })
    }

    fn preprocessing(r: &Resolved) -> Preprocessing {
        match r.mode {
            Mode::Dealer => Preprocessing::Files(r.randomness.clone().expect("checked in resolve")),
            Mode::TwoPcHe => Preprocessing::He { modulus_bits: r.he_bits },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the server bundle (with weights) and the stripped client bundle.
    Compile {
        manifest: PathBuf,
        #[arg(long, env = "SEALEDINFER_OUT", default_value = ".")]
        out: PathBuf,
    },
    /// Report whether a bundle carries any weights.
    Verify { bundle: PathBuf },
    /// Write a pair of correlated-randomness files.
    ///
    /// KIND is one of triples:elementwise, triples:binary,
    /// triples:matmul:MxNxP, dabits, truncpairs (each optionally followed by
    /// `:COUNT`) or session:BUNDLE, which covers COUNT sessions of that model
    /// labelled `<label>-0` .. `<label>-(COUNT-1)`.
    Dealer {
        kind: String,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, env = "SEALEDINFER_LABEL", default_value = "session")]
        label: String,
        #[arg(long, env = "SEALEDINFER_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "SEALEDINFER_OUT", default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        ring: RingArgs,
    },
    /// Model owner: serve secure inference sessions.
    ServeModel {
        #[command(flatten)]
        session: SessionArgs,
        /// Number of sessions to serve before exiting.
        #[arg(long, default_value_t = 1)]
        sessions: usize,
    },
    /// Data owner: run secure inference on one image file or a directory.
    RunInference {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, env = "SEALEDINFER_INPUT")]
        input: Option<PathBuf>,
        /// Concurrent sessions.
        #[arg(long, env = "SEALEDINFER_PARALLEL", default_value_t = 1)]
        parallel: usize,
        /// Seconds to keep retrying the connection.
        #[arg(long, default_value_t = 30)]
        connect_timeout: u64,
    },
    /// Insecure fixed-point evaluation, bit-identical to a dealer-mode run.
    EvalFixed {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        ring: RingArgs,
    },
    /// Insecure floating-point evaluation.
    EvalFloat {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare secure and insecure outputs; exit 1 unless equivalent.
    Eval {
        #[arg(long)]
        secure: PathBuf,
        #[arg(long)]
        insecure: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, env = "SEALEDINFER_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "SEALEDINFER_N_BOOT", default_value_t = 1000)]
        n_boot: usize,
        /// Largest accepted AUROC difference.
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
        #[arg(long, env = "SEALEDINFER_OUT", default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}

fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Compile { manifest, out } => compile(&manifest, &out),
        Command::Verify { bundle } => verify(&bundle),
        Command::Dealer { kind, count, label, seed, out, ring } => {
            dealer(&kind, count, &label, seed, &out, ring.config()?)
        }
        Command::ServeModel { session, sessions } => serve_model(&session.resolve(None)?, sessions),
        Command::RunInference { session, input, parallel, connect_timeout } => {
            run_inference(&session.resolve(input)?, parallel, Duration::from_secs(connect_timeout))
        }
        Command::EvalFixed { bundle, input, out, ring } => eval_insecure(&bundle, &input, &out, Some(ring.config()?)),
        Command::EvalFloat { bundle, input, out } => eval_insecure(&bundle, &input, &out, None),
        Command::Eval { secure, insecure, labels, seed, n_boot, tolerance, out } => {
            eval(&secure, &insecure, &labels, CompareOptions { n_boot, seed }, tolerance, &out)
        }
    }
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn compile(manifest: &Path, out: &Path) -> Result<u8> {
    let bundle = read_bundle(manifest)?;
    if bundle.role == BundleRole::Client || bundle.weights.is_empty() {
        bail!(usage(format!("{}: manifest carries no weights", manifest.display())));
    }
    create_dir(out)?;
    let name = bundle.graph.name().to_string();
    let client = strip_weights(&bundle);
    let mut entries = serde_json::Map::new();
    for (tag, b) in [("server", &bundle), ("client", &client)] {
        let bytes = save_bundle(b);
        let path = out.join(format!("{name}.{tag}.bundle"));
        std::fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        entries.insert(
            format!("{tag}_bundle"),
            json!({"path": path, "sha256": hex::encode(Sha256::digest(&bytes))}),
        );
    }
    entries.insert("name".into(), json!(name));
    entries.insert("graph_hash".into(), json!(bundle.graph_hash()));
    entries.insert("client_stripped".into(), json!(verify_stripped(&client)));
    print_json(&serde_json::Value::Object(entries));
    Ok(exit::OK)
}

fn verify(path: &Path) -> Result<u8> {
    let bundle = read_bundle(path)?;
    println!("stripped: {}", verify_stripped(&bundle));
    println!("role: {}", if bundle.role == BundleRole::Server { "server" } else { "client" });
    println!("weight tensors: {}", bundle.weights.len());
    println!("graph_hash: {}", bundle.graph_hash());
    Ok(exit::OK)
}

/// Parses a dealer kind specification into requests plus labels.
fn parse_kind(kind: &str, count: Option<usize>, cfg: &FixedPointConfig) -> Result<KindPlan> {
    let bad = |why: &str| usage(format!("malformed kind `{kind}`: {why}"));
    if let Some(path) = kind.strip_prefix("session:") {
        let bundle = read_bundle(Path::new(path))?;
        let budget = plan_budget(&bundle.graph, cfg, Mode::Dealer.trunc_mode());
        return Ok(KindPlan::Sessions {
            requests: requests_for(&budget, cfg),
            count: count.unwrap_or(1),
        });
    }
    let parts: Vec<&str> = kind.split(':').collect();
    let (head, mut rest) = match parts.split_first() {
        Some((h, r)) => (*h, r.to_vec()),
        None => return Err(bad("empty")),
    };
    let flavor = match head {
        "triples" => {
            let f = match rest.first().copied() {
                Some("elementwise") => TripleFlavor::Elementwise,
                Some("binary") => TripleFlavor::Binary,
                Some("matmul") => {
                    let dims: Vec<usize> = rest
                        .get(1)
                        .ok_or_else(|| bad("matmul needs MxNxP"))?
                        .split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("matmul dimensions must be integers"))?;
                    if dims.len() != 3 || dims.contains(&0) {
                        return Err(bad("matmul needs three positive dimensions MxNxP"));
                    }
                    rest.remove(0);
                    TripleFlavor::Matmul { m: dims[0], n: dims[1], p: dims[2] }
                }
                _ => return Err(bad("triples must be elementwise, binary or matmul:MxNxP")),
            };
            rest.remove(0);
            Some(f)
        }
        "dabits" | "truncpairs" => None,
        _ => return Err(bad("unknown kind")),
    };
    let n = match (rest.as_slice(), count) {
        ([], Some(c)) => c,
        ([c], None) => c.parse().map_err(|_| bad("count must be an integer"))?,
        ([c], Some(flag)) if c.parse() == Ok(flag) => flag,
        ([], None) => return Err(bad("missing count")),
        _ => return Err(bad("trailing fields or conflicting counts")),
    };
    if n == 0 {
        return Err(bad("count must be positive"));
    }
    let request = match (head, flavor) {
        ("triples", Some(flavor)) => DealerRequest::Triples { flavor, count: n },
        ("dabits", _) => DealerRequest::DaBits { count: n },
        _ => DealerRequest::TruncPairs { count: n, frac_bits: cfg.f() },
    };
    Ok(KindPlan::Single(request))
}

enum KindPlan {
    Single(DealerRequest),
    Sessions { requests: Vec<DealerRequest>, count: usize },
}

fn dealer(kind: &str, count: Option<usize>, label: &str, seed: Option<u64>, out: &Path, cfg: FixedPointConfig) -> Result<u8> {
    let plan = parse_kind(kind, count, &cfg)?;
    create_dir(out)?;
    let mut rng = match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    };
    let jobs: Vec<(String, Vec<DealerRequest>)> = match plan {
        KindPlan::Single(r) => vec![(label.to_string(), vec![r])],
        KindPlan::Sessions { requests, count } => {
            (0..count).map(|i| (format!("{label}-{i}"), requests.clone())).collect()
        }
    };
    let mut written = Vec::new();
    for (label, requests) in jobs {
        let (m0, m1) = dealer_generate(&requests, &cfg, &mut rng);
        for (party, material) in [(PartyId::P0, m0), (PartyId::P1, m1)] {
            let path = party_file(out, &label, party);
            write_file(&path, &cfg, &material)?;
            let records: usize = material.iter().map(Section::count).sum();
            written.push(json!({"path": path, "label": label, "party": party.index(), "records": records}));
        }
    }
    print_json(&json!({ "files": written }));
    Ok(exit::OK)
}

fn stats_json(s: &SessionStats) -> serde_json::Value {
    let mut v = serde_json::to_value(s).expect("serializable");
    v["bytes_total"] = json!(s.total_bytes());
    v
}

fn serve_model(r: &Resolved, sessions: usize) -> Result<u8> {
    let bundle = read_bundle(&r.bundle)?;
    if bundle.role != BundleRole::Server {
        bail!(usage(format!("{} is not a server bundle", r.bundle.display())));
    }
    create_dir(&r.out)?;
    let listener = TcpListener::bind(&r.endpoint).with_context(|| format!("binding {}", r.endpoint))?;
    log::info!("listening on {}", listener.local_addr()?);
    let results: Vec<Result<serde_json::Value>> = std::thread::scope(|s| {
        let mut handles = Vec::new();
        for i in 0..sessions {
            let (stream, peer) = match listener.accept() {
                Ok(c) => c,
                Err(e) => {
                    handles.push(None);
                    log::error!("accept failed: {e}");
                    break;
                }
            };
            log::info!("session {i} from {peer}");
            let bundle = &bundle;
            handles.push(Some(s.spawn(move || -> Result<serde_json::Value> {
                stream.set_nodelay(true)?;
                let o = run_secure_inference(
                    SessionParams {
                        role: Role::ModelOwner,
                        bundle,
                        input: None,
                        fixed_point: r.cfg,
                        mode: r.mode,
                        randomness_label: r.label.clone(),
                        preprocessing: SessionArgs::preprocessing(r),
                        seed: r.seed.map(|s| s.wrapping_add(i as u64)),
                        accept_label_prefix: true,
                    },
                    stream,
                )?;
                let doc = json!({"label": o.config.randomness_label, "stats": stats_json(&o.stats)});
                write_json(&r.out.join(format!("stats-{}.json", o.config.randomness_label)), &doc)?;
                Ok(doc)
            })));
        }
        handles
            .into_iter()
            .map(|h| match h {
                Some(h) => h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("session thread panicked"))),
                None => Err(anyhow::anyhow!("accept failed")),
            })
            .collect()
    });
    let mut aggregate = SessionStats::default();
    let mut first_err = None;
    let mut per_session = Vec::new();
    for res in results {
        match res {
            Ok(doc) => {
                let s: SessionStats = serde_json::from_value(doc["stats"].clone())?;
                aggregate.accumulate(&s);
                per_session.push(doc);
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                first_err.get_or_insert(e);
            }
        }
    }
    write_json(
        &r.out.join("stats.json"),
        &json!({"role": "model_owner", "mode": r.mode.as_str(), "sessions": per_session.len(),
                "aggregate": stats_json(&aggregate), "per_session": per_session}),
    )?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(exit::OK),
    }
}

fn connect(endpoint: &str, timeout: Duration) -> Result<TcpStream> {
    let deadline = Instant::now() + timeout;
    loop {
        match TcpStream::connect(endpoint) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) if Instant::now() < deadline => {
                log::debug!("connect to {endpoint}: {e}; retrying");
                std::thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(e).with_context(|| format!("connecting to {endpoint}")),
        }
    }
}

fn run_inference(r: &Resolved, parallel: usize, timeout: Duration) -> Result<u8> {
    if parallel == 0 {
        bail!(usage("--parallel must be at least 1"));
    }
    let input = r.inputs.as_ref().ok_or_else(|| usage("--input is required"))?;
    let bundle = read_bundle(&r.bundle)?;
    if !verify_stripped(&bundle) {
        bail!(usage(format!("{} carries weights; the data owner uses the client bundle", r.bundle.display())));
    }
    // every image is checked before the first connection
    let images = load_images(input, &bundle.graph)?;
    create_dir(&r.out)?;
    let batch = run_batch(images.len(), parallel, |i| {
        let stream = connect(&r.endpoint, timeout).map_err(|e| {
            sealedinfer::Error::Io(std::io::Error::new(std::io::ErrorKind::ConnectionRefused, format!("{e:#}")))
        })?;
        run_secure_inference(
            SessionParams {
                role: Role::DataOwner,
                bundle: &bundle,
                input: Some(&images[i].data),
                fixed_point: r.cfg,
                mode: r.mode,
                randomness_label: format!("{}-{i}", r.label),
                preprocessing: SessionArgs::preprocessing(r),
                seed: r.seed.map(|s| s.wrapping_add(i as u64)),
                accept_label_prefix: false,
            },
            stream,
        )
    });
    let mut per_session = Vec::new();
    let mut first_err = None;
    for (img, res) in images.iter().zip(batch.results) {
        match res {
            Ok(o) => {
                let logits = o.logits.clone().expect("data owner receives logits");
                write_output(
                    &r.out,
                    &ImageOutput {
                        image: img.name.clone(),
                        probabilities: sigmoid(&logits),
                        logits,
                        logits_ring: o.logits_ring.clone(),
                    },
                )?;
                per_session.push(json!({"image": img.name, "label": o.config.randomness_label,
                                        "stats": stats_json(&o.stats)}));
            }
            Err(e) => {
                eprintln!("error: {}: {e}", img.name);
                first_err.get_or_insert(e);
            }
        }
    }
    write_json(
        &r.out.join("stats.json"),
        &json!({"role": "data_owner", "mode": r.mode.as_str(), "inferences": per_session.len(),
                "parallel": parallel, "wall_time": batch.wall_time,
                "aggregate": stats_json(&batch.aggregate), "per_session": per_session}),
    )?;
    match first_err {
        Some(e) => Err(e.into()),
        None => {
            print_json(&json!({"inferences": per_session.len(), "wall_time": batch.wall_time,
                               "bytes_total": batch.aggregate.total_bytes(), "rounds": batch.aggregate.rounds}));
            Ok(exit::OK)
        }
    }
}

/// Plaintext evaluation in fixed point (`cfg` given) or floating point.
fn eval_insecure(bundle_path: &Path, input: &Path, out: &Path, cfg: Option<FixedPointConfig>) -> Result<u8> {
    let bundle = read_bundle(bundle_path)?;
    if bundle.weights.is_empty() {
        bail!(usage(format!("{} has no weights", bundle_path.display())));
    }
    let images = load_images(input, &bundle.graph)?;
    create_dir(out)?;
    let started = Instant::now();
    let mut outputs = Vec::with_capacity(images.len());
    for img in &images {
        let (logits, ring) = match &cfg {
            Some(cfg) => {
                let ring = eval_fixed(&bundle.graph, &bundle.weights, &img.data, cfg)?;
                (cfg.decode_all(&ring), Some(ring))
            }
            None => (eval_float(&bundle.graph, &bundle.weights, &img.data)?, None),
        };
        outputs.push(ImageOutput {
            image: img.name.clone(),
            probabilities: sigmoid(&logits),
            logits,
            logits_ring: ring,
        });
    }
    let wall_time = started.elapsed().as_secs_f64();
    for o in &outputs {
        write_output(out, o)?;
    }
    let kind = if cfg.is_some() { "fixed" } else { "float" };
    write_json(&out.join("stats.json"), &json!({"evaluation": kind, "inferences": outputs.len(), "wall_time": wall_time}))?;
    print_json(&json!({"evaluation": kind, "inferences": outputs.len(), "wall_time": wall_time}));
    Ok(exit::OK)
}

/// Secure wall time, bytes and rounds from a run-inference stats file.
fn secure_costs(dir: &Path) -> Option<(f64, u64, u64)> {
    let v: serde_json::Value = read_json(&dir.join("stats.json")).ok()?;
    let agg = v.get("aggregate")?;
    Some((v["wall_time"].as_f64()?, agg["bytes_total"].as_u64()?, agg["rounds"].as_u64()?))
}

fn eval(secure: &Path, insecure: &Path, labels: &Path, opts: CompareOptions, tolerance: f64, out: &Path) -> Result<u8> {
    let sec = read_outputs(secure)?;
    let ins = read_outputs(insecure)?;
    let lab: LabelFile = read_json(labels)?;
    let names: Vec<&String> = ins.keys().collect();
    if names != sec.keys().collect::<Vec<_>>() {
        bail!(sealedinfer::Error::Misaligned(format!(
            "{} and {} hold different image sets",
            secure.display(),
            insecure.display()
        )));
    }
    let mut label_rows = Vec::with_capacity(names.len());
    for n in &names {
        label_rows.push(
            lab.labels
                .get(*n)
                .cloned()
                .ok_or_else(|| sealedinfer::Error::Misaligned(format!("no labels for image `{n}`")))?,
        );
    }
    let rows = |m: &std::collections::BTreeMap<String, ImageOutput>| -> Vec<Vec<f64>> {
        m.values().map(|o| o.probabilities.clone()).collect()
    };
    let cost = secure_costs(secure).and_then(|(secure_time, bytes, rounds)| {
        let v: serde_json::Value = read_json(&insecure.join("stats.json")).ok()?;
        Some(CostSummary::new(names.len(), secure_time, v["wall_time"].as_f64()?, bytes, rounds))
    });
    let report = compare_runs(&rows(&ins), &rows(&sec), &label_rows, &lab.classes, cost, opts)?;
    create_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    let table = report.to_table();
    std::fs::write(out.join("report.txt"), &table).with_context(|| format!("writing {}", out.display()))?;
    println!("{table}");
    let passed = report.all_accepted() && report.max_delta_auroc() <= tolerance;
    Ok(if passed { exit::OK } else { exit::EVAL_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(kind: &str, count: Option<usize>) -> Result<DealerRequest> {
        match parse_kind(kind, count, &FixedPointConfig::default())? {
            KindPlan::Single(r) => Ok(r),
            KindPlan::Sessions { .. } => unreachable!(),
        }
    }

    #[test]
    fn kind_specs() {
        assert_eq!(
            single("triples:elementwise:10000", None).unwrap(),
            DealerRequest::Triples { flavor: TripleFlavor::Elementwise, count: 10000 }
        );
        assert_eq!(
            single("triples:matmul:2x3x4", Some(5)).unwrap(),
            DealerRequest::Triples { flavor: TripleFlavor::Matmul { m: 2, n: 3, p: 4 }, count: 5 }
        );
        assert_eq!(single("dabits:7", Some(7)).unwrap(), DealerRequest::DaBits { count: 7 });
        assert_eq!(
            single("truncpairs:3", None).unwrap(),
            DealerRequest::TruncPairs { count: 3, frac_bits: 12 }
        );
        for bad in [
            "triples",
            "triples:cubic:3",
            "triples:matmul:2x3:1",
            "triples:matmul:0x1x1:1",
            "dabits",
            "dabits:x",
            "dabits:0",
            "dabits:3:4",
            "oblivious:3",
            "",
        ] {
            let err = single(bad, None).unwrap_err();
            assert_eq!(exit::code_for(&err), exit::USAGE, "{bad}");
        }
        assert!(single("dabits:3", Some(4)).is_err());
    }

    #[test]
    fn exit_codes_follow_error_class() {
        let proto: anyhow::Error = sealedinfer::Error::PeerAbort("x".into()).into();
        assert_eq!(exit::code_for(&proto), exit::PROTOCOL);
        let io: anyhow::Error = std::io::Error::other("disk").into();
        assert_eq!(exit::code_for(&io.context("writing")), exit::IO);
        let shape: anyhow::Error = sealedinfer::Error::ShapeMismatch("x".into()).into();
        assert_eq!(exit::code_for(&shape), exit::USAGE);
        let reused: anyhow::Error = sealedinfer::Error::RandomnessReused("f".into()).into();
        assert_eq!(exit::code_for(&reused), exit::IO);
    }
}
