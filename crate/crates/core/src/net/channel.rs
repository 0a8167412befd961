// SPDX-License-Identifier: Apache-2.0

//! Message channel over a framed byte stream, with byte/round accounting
//! and a per-frame transcript.
//!
//! A message is one or more frames. Every frame payload starts with an
//! 8-byte chunk header (sequence number, chunk count; both u32 big-endian)
//! so messages larger than the frame cap can be split.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::frame::{read_frame, write_frame, Frame, MsgType, DEFAULT_FRAME_CAP};
use crate::error::{Error, Result};

pub const CHUNK_HEADER_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub msg_type: MsgType,
    /// On-wire size of the frame, header included.
    pub bytes: usize,
    pub layer: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
    /// Number of send/receive alternations: a round is one flight of
    /// messages in each direction.
    pub rounds: u64,
    pub wall_time: f64,
    pub per_layer: BTreeMap<String, LayerStats>,
}

impl SessionStats {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_sent + self.bytes_received
    }

    /// Adds counters; wall times are summed.
    pub fn accumulate(&mut self, other: &SessionStats) {
        self.bytes_sent += other.bytes_sent;
        self.bytes_received += other.bytes_received;
        self.frames_sent += other.frames_sent;
        self.frames_received += other.frames_received;
        self.rounds += other.rounds;
        self.wall_time += other.wall_time;
        for (k, v) in &other.per_layer {
            let e = self.per_layer.entry(k.clone()).or_default();
            e.bytes_sent += v.bytes_sent;
            e.bytes_received += v.bytes_received;
            e.frames_sent += v.frames_sent;
            e.frames_received += v.frames_received;
        }
    }
}

pub struct Channel<T> {
    io: T,
    initiator: bool,
    cap: usize,
    layer: String,
    stats: SessionStats,
    transcript: Vec<TranscriptEntry>,
    last_direction: Option<Direction>,
    flights: u64,
    started: Instant,
}

impl<T: Read + Write> Channel<T> {
    /// `initiator` is the side that speaks first in every exchange.
    pub fn new(io: T, initiator: bool) -> Self {
        Self::with_cap(io, initiator, DEFAULT_FRAME_CAP)
    }

    pub fn with_cap(io: T, initiator: bool, cap: usize) -> Self {
        assert!(cap > CHUNK_HEADER_LEN, "frame cap too small");
        Channel {
            io,
            initiator,
            cap,
            layer: "session".to_string(),
            stats: SessionStats::default(),
            transcript: Vec::new(),
            last_direction: None,
            flights: 0,
            started: Instant::now(),
        }
    }

    pub fn is_initiator(&self) -> bool {
        self.initiator
    }

    /// Attributes subsequent traffic to `layer`.
    pub fn set_layer(&mut self, layer: &str) {
        if self.layer != layer {
            self.layer = layer.to_string();
        }
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    pub fn stats(&self) -> SessionStats {
        let mut s = self.stats.clone();
        s.rounds = self.flights.div_ceil(2);
        s.wall_time = self.started.elapsed().as_secs_f64();
        s
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn get_ref(&self) -> &T {
        &self.io
    }

    pub fn into_inner(self) -> T {
        self.io
    }

    fn note(&mut self, direction: Direction, msg_type: MsgType, bytes: usize) {
        if self.last_direction != Some(direction) {
            self.flights += 1;
            self.last_direction = Some(direction);
        }
        let layer = self.stats.per_layer.entry(self.layer.clone()).or_default();
        match direction {
            Direction::Sent => {
                self.stats.bytes_sent += bytes as u64;
                self.stats.frames_sent += 1;
                layer.bytes_sent += bytes as u64;
                layer.frames_sent += 1;
            }
            Direction::Received => {
                self.stats.bytes_received += bytes as u64;
                self.stats.frames_received += 1;
                layer.bytes_received += bytes as u64;
                layer.frames_received += 1;
            }
        }
        self.transcript.push(TranscriptEntry {
            direction,
            msg_type,
            bytes,
            layer: self.layer.clone(),
        });
    }

    pub fn send(&mut self, msg_type: MsgType, payload: &[u8]) -> Result<()> {
        let chunk = self.cap - CHUNK_HEADER_LEN;
        let total = payload.len().div_ceil(chunk).max(1);
        if total > u32::MAX as usize {
            return Err(Error::Protocol("message too large to chunk".into()));
        }
        for seq in 0..total {
            let part = &payload[(seq * chunk).min(payload.len())..((seq + 1) * chunk).min(payload.len())];
            let mut body = Vec::with_capacity(CHUNK_HEADER_LEN + part.len());
            body.extend_from_slice(&(seq as u32).to_be_bytes());
            body.extend_from_slice(&(total as u32).to_be_bytes());
            body.extend_from_slice(part);
            let frame = Frame::new(msg_type, body);
            let n = write_frame(&mut self.io, &frame, self.cap)?;
            self.note(Direction::Sent, msg_type, n);
        }
        Ok(())
    }

    fn recv_frame(&mut self) -> Result<Frame> {
        let frame = read_frame(&mut self.io, self.cap)?;
        self.note(Direction::Received, frame.msg_type, frame.wire_len());
        Ok(frame)
    }

    /// Receives one message of the expected type. An ABORT from the peer
    /// becomes [`Error::PeerAbort`].
    pub fn recv(&mut self, expected: MsgType) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let mut seq = 0u32;
        loop {
            let frame = self.recv_frame()?;
            let body = &frame.payload;
            if body.len() < CHUNK_HEADER_LEN {
                return Err(Error::TruncatedFrame("missing chunk header".into()));
            }
            let got_seq = u32::from_be_bytes(body[0..4].try_into().unwrap());
            let total = u32::from_be_bytes(body[4..8].try_into().unwrap());
            if frame.msg_type == MsgType::Abort {
                return Err(Error::PeerAbort(
                    String::from_utf8_lossy(&body[CHUNK_HEADER_LEN..]).into_owned(),
                ));
            }
            if frame.msg_type != expected {
                return Err(Error::Protocol(format!(
                    "expected {} message, got {}",
                    expected.name(),
                    frame.msg_type.name()
                )));
            }
            if got_seq != seq || total == 0 || got_seq >= total {
                return Err(Error::Protocol(format!(
                    "chunk {got_seq}/{total} out of order (expected {seq})"
                )));
            }
            out.extend_from_slice(&body[CHUNK_HEADER_LEN..]);
            seq += 1;
            if seq == total {
                return Ok(out);
            }
        }
    }

    /// One round: the initiator sends then receives, the responder
    /// receives then sends.
    pub fn exchange(&mut self, msg_type: MsgType, payload: &[u8]) -> Result<Vec<u8>> {
        if self.initiator {
            self.send(msg_type, payload)?;
            self.recv(msg_type)
        } else {
            let got = self.recv(msg_type)?;
            self.send(msg_type, payload)?;
            Ok(got)
        }
    }

    /// Best-effort notification that this side is giving up.
    pub fn abort(&mut self, reason: &str) {
        if let Err(e) = self.send(MsgType::Abort, reason.as_bytes()) {
            log::debug!("could not deliver ABORT: {e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::os::unix::net::UnixStream;
    use std::thread;

    #[test]
    fn chunked_messages_and_accounting() {
        let (a, b) = UnixStream::pair().unwrap();
        let payload: Vec<u8> = (0..1000u32).map(|i| i as u8).collect();
        let p2 = payload.clone();
        let h = thread::spawn(move || {
            let mut ch = Channel::with_cap(b, false, 108);
            let got = ch.exchange(MsgType::Open, &[9; 3]).unwrap();
            assert_eq!(got, p2);
            ch.stats()
        });
        let mut ch = Channel::with_cap(a, true, 108);
        let got = ch.exchange(MsgType::Open, &payload).unwrap();
        assert_eq!(got, vec![9; 3]);
        let s0 = ch.stats();
        let s1 = h.join().unwrap();
        // 1000 bytes in 100-byte chunks: 10 frames of 119 bytes
        assert_eq!(s0.frames_sent, 10);
        assert_eq!(s0.bytes_sent, 10 * 119);
        assert_eq!(s0.bytes_received, 11 + 8 + 3);
        assert_eq!(s0.bytes_sent, s1.bytes_received);
        assert_eq!(s0.bytes_received, s1.bytes_sent);
        assert_eq!((s0.rounds, s1.rounds), (1, 1));
        let summed: usize = ch.transcript().iter().map(|t| t.bytes).sum();
        assert_eq!(summed as u64, s0.total_bytes());
    }

    #[test]
    fn abort_surfaces_as_peer_abort() {
        let (a, b) = UnixStream::pair().unwrap();
        let mut ca = Channel::new(a, true);
        let mut cb = Channel::new(b, false);
        cb.abort("no thanks");
        assert!(matches!(ca.recv(MsgType::Open), Err(Error::PeerAbort(m)) if m == "no thanks"));
        ca.send(MsgType::Config, b"{}").unwrap();
        assert!(matches!(cb.recv(MsgType::Open), Err(Error::Protocol(_))));
    }
}
