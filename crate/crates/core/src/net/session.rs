// SPDX-License-Identifier: Apache-2.0

//! Session orchestration: handshake, preprocessing, secure evaluation and
//! output delivery for one inference.
//!
//! The data owner connects and speaks first. A session runs:
//!
//! 1. HELLO each way (protocol version, role).
//! 2. CONFIG each way ([`SessionConfig`] as canonical JSON); any differing
//!    field ends the session with an error naming it.
//! 3. Correlated randomness: loaded from this party's `.crnd` file (dealer
//!    mode, claimed one-time) or generated with the peer (2pc-he mode).
//! 4. Input and weight sharing, the layer schedule, and the OUTPUT message
//!    from the model owner to the data owner.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::channel::{Channel, SessionStats, TranscriptEntry};
use super::frame::{MsgType, PROTOCOL_VERSION};
use crate::error::{Error, Result};
use crate::graph::{encode_weights, verify_stripped, BundleRole, GraphBundle};
use crate::protocols::{plan_budget, reveal_output, run_graph_secure, LocalSecret, ProtocolState, TruncMode};
use crate::ring::FixedPointConfig;
use crate::sharing::crnd::{claim_file, party_file, read_file};
use crate::sharing::he::{he_preprocess, he_setup};
use crate::sharing::{PartyId, RandomnessBudget, RandomnessStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Holds the weights; party 0; listens.
    ModelOwner,
    /// Holds the input and receives the logits; party 1; connects.
    DataOwner,
}

impl Role {
    pub fn party(self) -> PartyId {
        match self {
            Role::ModelOwner => PartyId::P0,
            Role::DataOwner => PartyId::P1,
        }
    }

    fn code(self) -> u8 {
        match self {
            Role::ModelOwner => 0,
            Role::DataOwner => 1,
        }
    }
}

/// Preprocessing trust mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Trusted-dealer randomness; bit-exact truncation.
    #[serde(rename = "dealer")]
    Dealer,
    /// Two-party homomorphic preprocessing; local truncation.
    #[serde(rename = "2pc-he")]
    TwoPcHe,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Dealer => "dealer",
            Mode::TwoPcHe => "2pc-he",
        }
    }

    pub fn trunc_mode(self) -> TruncMode {
        match self {
            Mode::Dealer => TruncMode::Faithful,
            Mode::TwoPcHe => TruncMode::Local,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dealer" => Ok(Mode::Dealer),
            "2pc-he" => Ok(Mode::TwoPcHe),
            other => Err(Error::InvalidInput(format!(
                "unknown mode `{other}` (expected dealer or 2pc-he)"
            ))),
        }
    }
}

/// What both parties must agree on before any secret-dependent message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub protocol_version: u16,
    pub bitwidth_k: u32,
    pub frac_bits_f: u32,
    pub graph_hash: String,
    pub mode: Mode,
    pub randomness_label: String,
}

impl SessionConfig {
    pub fn new(cfg: &FixedPointConfig, graph_hash: &str, mode: Mode, label: &str) -> Self {
        SessionConfig {
            protocol_version: PROTOCOL_VERSION,
            bitwidth_k: cfg.k(),
            frac_bits_f: cfg.f(),
            graph_hash: graph_hash.to_string(),
            mode,
            randomness_label: label.to_string(),
        }
    }

    pub fn fixed_point(&self) -> Result<FixedPointConfig> {
        FixedPointConfig::new(self.bitwidth_k, self.frac_bits_f)
    }

    /// First differing field as `(name, local, peer)`.
    pub fn first_difference(&self, peer: &SessionConfig) -> Option<(&'static str, String, String)> {
        let fields: [(&'static str, String, String); 6] = [
            (
                "protocol_version",
                self.protocol_version.to_string(),
                peer.protocol_version.to_string(),
            ),
            ("bitwidth_k", self.bitwidth_k.to_string(), peer.bitwidth_k.to_string()),
            ("frac_bits_f", self.frac_bits_f.to_string(), peer.frac_bits_f.to_string()),
            ("graph_hash", self.graph_hash.clone(), peer.graph_hash.clone()),
            ("mode", self.mode.to_string(), peer.mode.to_string()),
            (
                "randomness_label",
                self.randomness_label.clone(),
                peer.randomness_label.clone(),
            ),
        ];
        fields.into_iter().find(|(_, a, b)| a != b)
    }
}

fn hello_payload(role: Role) -> Vec<u8> {
    let mut p = PROTOCOL_VERSION.to_be_bytes().to_vec();
    p.push(role.code());
    p
}

fn check_hello(payload: &[u8], own: Role) -> Result<()> {
    if payload.len() != 3 {
        return Err(Error::Protocol(format!("HELLO payload of {} bytes", payload.len())));
    }
    let version = u16::from_be_bytes([payload[0], payload[1]]);
    if version != PROTOCOL_VERSION {
        return Err(Error::HandshakeMismatch {
            field: "protocol_version".into(),
            local: PROTOCOL_VERSION.to_string(),
            peer: version.to_string(),
        });
    }
    if payload[2] == own.code() || payload[2] > 1 {
        return Err(Error::Protocol(format!(
            "peer announced role code {}, which does not complement ours",
            payload[2]
        )));
    }
    Ok(())
}

/// HELLO and CONFIG exchange with an exact comparison of every field.
pub fn handshake<T: Read + Write>(
    ch: &mut Channel<T>,
    role: Role,
    local: &SessionConfig,
) -> Result<SessionConfig> {
    handshake_accepting(ch, role, local, |_| false)
}

/// Like [`handshake`], but a model owner adopts the data owner's randomness
/// label when `accept_label` approves it. Used by servers that handle
/// several sessions, each with its own label.
pub fn handshake_accepting<T: Read + Write>(
    ch: &mut Channel<T>,
    role: Role,
    local: &SessionConfig,
    accept_label: impl Fn(&str) -> bool,
) -> Result<SessionConfig> {
    ch.set_layer("handshake");
    let mut local = local.clone();
    let peer: SessionConfig = match role {
        Role::DataOwner => {
            ch.send(MsgType::Hello, &hello_payload(role))?;
            check_hello(&ch.recv(MsgType::Hello)?, role)?;
            ch.send(MsgType::Config, &serde_json::to_vec(&local).expect("serializable"))?;
            parse_config(&ch.recv(MsgType::Config)?)?
        }
        Role::ModelOwner => {
            check_hello(&ch.recv(MsgType::Hello)?, role)?;
            ch.send(MsgType::Hello, &hello_payload(role))?;
            let peer = parse_config(&ch.recv(MsgType::Config)?)?;
            if peer.randomness_label != local.randomness_label && accept_label(&peer.randomness_label) {
                local.randomness_label = peer.randomness_label.clone();
            }
            ch.send(MsgType::Config, &serde_json::to_vec(&local).expect("serializable"))?;
            peer
        }
    };
    if let Some((field, l, p)) = local.first_difference(&peer) {
        if role == Role::ModelOwner {
            ch.abort(&format!("handshake mismatch on `{field}`"));
        }
        return Err(Error::HandshakeMismatch {
            field: field.to_string(),
            local: l,
            peer: p,
        });
    }
    Ok(local)
}

fn parse_config(bytes: &[u8]) -> Result<SessionConfig> {
    serde_json::from_slice(bytes).map_err(|e| Error::Protocol(format!("malformed CONFIG: {e}")))
}

/// Where this party's correlated randomness comes from.
#[allow(clippy::large_enum_variant)] // built once per session, then moved
pub enum Preprocessing {
    /// Material already in memory.
    Store(RandomnessStore),
    /// `<dir>/<label>.p<party>.crnd`, claimed so it cannot be used twice.
    Files(PathBuf),
    /// Generated with the peer at the start of the session.
    He { modulus_bits: u64 },
}

pub struct SessionParams<'a> {
    pub role: Role,
    pub bundle: &'a GraphBundle,
    /// Data owner only.
    pub input: Option<&'a [f64]>,
    pub fixed_point: FixedPointConfig,
    pub mode: Mode,
    pub randomness_label: String,
    pub preprocessing: Preprocessing,
    /// Seeds this party's randomness; `None` draws from the OS.
    pub seed: Option<u64>,
    /// Model owner: accept any data-owner label that starts with ours.
    pub accept_label_prefix: bool,
}

#[derive(Debug, Clone)]
pub struct InferenceOutcome {
    pub role: Role,
    pub config: SessionConfig,
    /// Data owner only.
    pub logits_ring: Option<Vec<u64>>,
    pub logits: Option<Vec<f64>>,
    pub stats: SessionStats,
    pub transcript: Vec<TranscriptEntry>,
    /// Correlated randomness left unused.
    pub leftover: RandomnessBudget,
}

fn party_rng(seed: Option<u64>, party: PartyId) -> ChaCha20Rng {
    match seed {
        Some(s) => {
            let mut rng = ChaCha20Rng::seed_from_u64(s);
            rng.set_stream(1 + party.index() as u64);
            rng
        }
        None => ChaCha20Rng::from_entropy(),
    }
}

/// Runs one secure inference over `transport`.
pub fn run_secure_inference<T: Read + Write>(params: SessionParams<'_>, transport: T) -> Result<InferenceOutcome> {
    let role = params.role;
    let party = role.party();
    let cfg = params.fixed_point;
    let graph = &params.bundle.graph;

    // local checks come before any network traffic
    let (weights, input) = match role {
        Role::ModelOwner => {
            if params.bundle.role != BundleRole::Server || params.bundle.weights.is_empty() {
                return Err(Error::InvalidInput("the model owner needs a server bundle with weights".into()));
            }
            (Some(encode_weights(graph, &params.bundle.weights, &cfg)?), None)
        }
        Role::DataOwner => {
            if !verify_stripped(params.bundle) {
                return Err(Error::InvalidInput(
                    "the data owner's bundle must not carry weights".into(),
                ));
            }
            let x = params
                .input
                .ok_or_else(|| Error::InvalidInput("the data owner must supply an input".into()))?;
            if x.len() != graph.input_len() {
                return Err(Error::ShapeMismatch(format!(
                    "input has {} values, graph expects shape {:?} ({} values)",
                    x.len(),
                    graph.input_shape(),
                    graph.input_len()
                )));
            }
            (None, Some(cfg.encode_all(x)?))
        }
    };
    if matches!(
        (&params.preprocessing, params.mode),
        (Preprocessing::He { .. }, Mode::Dealer) | (Preprocessing::Files(_), Mode::TwoPcHe)
    ) {
        return Err(Error::InvalidInput(format!(
            "preprocessing source does not fit mode {}",
            params.mode
        )));
    }

    let mut ch = Channel::new(transport, role == Role::DataOwner);
    let local = SessionConfig::new(&cfg, &params.bundle.graph_hash(), params.mode, &params.randomness_label);
    let prefix = params.randomness_label.clone();
    let agreed = handshake_accepting(&mut ch, role, &local, |l| {
        params.accept_label_prefix && l.starts_with(&prefix)
    })?;

    let mut rng = party_rng(params.seed, party);
    let trunc = params.mode.trunc_mode();
    let result = (|| -> Result<(Option<Vec<u64>>, RandomnessBudget)> {
        let store = match params.preprocessing {
            Preprocessing::Store(s) => s,
            Preprocessing::Files(dir) => {
                let path = party_file(&dir, &agreed.randomness_label, party);
                claim_file(&path)?;
                let (file_cfg, file_party, sections) = read_file(&path)?;
                if file_cfg.k() != cfg.k() || file_party != party {
                    return Err(Error::BadRandomness(format!(
                        "{} is for party {} at k={}, session is party {} at k={}",
                        path.display(),
                        file_party.index(),
                        file_cfg.k(),
                        party.index(),
                        cfg.k()
                    )));
                }
                RandomnessStore::from_sections(party, cfg, sections)?
            }
            Preprocessing::He { modulus_bits } => {
                ch.set_layer("preprocessing");
                let budget = plan_budget(graph, &cfg, trunc);
                let keys = he_setup(&mut ch, party, &cfg, modulus_bits, &mut rng)?;
                he_preprocess(&mut ch, party, &keys, &cfg, &budget, &mut rng)?
            }
        };
        let mut state = ProtocolState::new(party, cfg, trunc, store, &mut ch)?;
        let secret = match (&weights, &input) {
            (Some(w), _) => LocalSecret::Weights(w),
            (_, Some(x)) => LocalSecret::Input(x),
            _ => unreachable!("one of weights or input is set above"),
        };
        let shares = run_graph_secure(&mut state, graph, secret, &mut rng)?;
        let out = reveal_output(&mut state, &shares)?;
        let store = state.into_store();
        store.audit()?;
        Ok((out, store.remaining()))
    })();

    let (logits_ring, leftover) = match result {
        Ok(v) => v,
        Err(e) => {
            if !matches!(e, Error::PeerAbort(_) | Error::Io(_)) {
                ch.abort(&e.to_string());
            }
            return Err(e);
        }
    };
    let logits = logits_ring.as_ref().map(|v| cfg.decode_all(v));
    Ok(InferenceOutcome {
        role,
        config: agreed,
        logits_ring,
        logits,
        stats: ch.stats(),
        transcript: ch.transcript().to_vec(),
        leftover,
    })
}

/// Results of [`run_batch`], in session order.
#[derive(Debug)]
pub struct BatchOutcome {
    pub results: Vec<Result<InferenceOutcome>>,
    /// Counters summed over successful sessions.
    pub aggregate: SessionStats,
    /// Elapsed time for the whole batch.
    pub wall_time: f64,
}

/// Runs `count` independent sessions with at most `parallelism` at once.
/// A failing session does not stop the others.
pub fn run_batch<F>(count: usize, parallelism: usize, session: F) -> BatchOutcome
where
    F: Fn(usize) -> Result<InferenceOutcome> + Sync,
{
    use rayon::prelude::*;
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<InferenceOutcome>> =
        pool.install(|| (0..count).into_par_iter().map(&session).collect());
    let mut aggregate = SessionStats::default();
    for r in results.iter().flatten() {
        aggregate.accumulate(&r.stats);
    }
    BatchOutcome {
        results,
        aggregate,
        wall_time: started.elapsed().as_secs_f64(),
    }
}

/// Runs both parties in this process over a socket pair. Returns the model
/// owner's outcome and the data owner's outcome.
pub fn run_local_pair(
    server: SessionParams<'_>,
    client: SessionParams<'_>,
) -> (Result<InferenceOutcome>, Result<InferenceOutcome>) {
    let (a, b) = std::os::unix::net::UnixStream::pair().expect("socket pair");
    std::thread::scope(|s| {
        let h = s.spawn(move || run_secure_inference(server, a));
        let c = run_secure_inference(client, b);
        (h.join().expect("model owner thread"), c)
    })
}
