// SPDX-License-Identifier: Apache-2.0

//! Two-party runtime: framing, channels, handshake and sessions.

mod channel;
pub mod frame;
mod session;

pub use channel::{
    Channel, Direction, LayerStats, SessionStats, TranscriptEntry, CHUNK_HEADER_LEN,
};
pub use frame::{Frame, MsgType, DEFAULT_FRAME_CAP, HEADER_LEN, MAGIC, PROTOCOL_VERSION};
pub use session::{
    handshake, handshake_accepting, run_batch, run_local_pair, run_secure_inference, BatchOutcome,
    InferenceOutcome, Mode, Preprocessing, Role, SessionConfig, SessionParams,
};
