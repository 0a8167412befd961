// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fixed-point config: {0}")]
    InvalidConfig(String),

    #[error("fixed-point overflow: {value} does not fit in k={k}, f={f}")]
    Overflow { value: f64, k: u32, f: u32 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("manifest parse error: {0}")]
    Parse(String),

    #[error("dangling layer reference: layer `{layer}` refers to unknown input `{input}`")]
    DanglingReference { layer: String, input: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("share mismatch: {0}")]
    ShareMismatch(String),

    #[error("correlated randomness exhausted: {kind} (needed {needed}, {available} left)")]
    Exhausted {
        kind: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("correlated randomness exhausted at layer `{layer}`: {source}")]
    ExhaustedAt {
        layer: String,
        #[source]
        source: Box<Error>,
    },

    #[error("correlated randomness file already consumed: {0}")]
    RandomnessReused(String),

    #[error("bad randomness file: {0}")]
    BadRandomness(String),

    #[error("ciphertext validation failure: {0}")]
    Ciphertext(String),

    #[error("decryption failed: ciphertext was produced under a different key")]
    WrongKey,

    #[error("AHE parameter error: {0}")]
    AheParams(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("bad frame magic {0:02x?}")]
    BadMagic([u8; 4]),

    #[error("truncated frame: {0}")]
    TruncatedFrame(String),

    #[error("frame of {size} bytes exceeds cap of {cap} bytes")]
    OversizeFrame { size: usize, cap: usize },

    #[error("unknown message type {0}")]
    UnknownMessageType(u8),

    #[error("handshake mismatch on `{field}`: local {local}, peer {peer}")]
    HandshakeMismatch {
        field: String,
        local: String,
        peer: String,
    },

    #[error("session aborted by peer: {0}")]
    PeerAbort(String),

    #[error("graph hash mismatch: {0}")]
    HashMismatch(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("misaligned runs: {0}")]
    Misaligned(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that come from talking to the peer rather than
    /// from local inputs.
    pub fn is_protocol(&self) -> bool {
        matches!(
            self,
            Error::Protocol(_)
                | Error::BadMagic(_)
                | Error::TruncatedFrame(_)
                | Error::OversizeFrame { .. }
                | Error::UnknownMessageType(_)
                | Error::HandshakeMismatch { .. }
                | Error::PeerAbort(_)
                | Error::HashMismatch(_)
                | Error::Ciphertext(_)
        )
    }
}
