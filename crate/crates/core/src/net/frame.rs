// SPDX-License-Identifier: Apache-2.0

//! Wire framing.
//!
//! ```text
//! offset  size  field
//!      0     4  magic 0x32 0x50 0x43 0x31 ("2PC1")
//!      4     2  version, big-endian
//!      6     1  message type
//!      7     4  payload length, big-endian
//!     11     n  payload
//! ```

use std::io::{ErrorKind, Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = [0x32, 0x50, 0x43, 0x31];
pub const PROTOCOL_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 11;
pub const DEFAULT_FRAME_CAP: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[repr(u8)]
pub enum MsgType {
    Hello = 1,
    Config = 2,
    Open = 3,
    Ciphertext = 4,
    Output = 5,
    Abort = 6,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => MsgType::Hello,
            2 => MsgType::Config,
            3 => MsgType::Open,
            4 => MsgType::Ciphertext,
            5 => MsgType::Output,
            6 => MsgType::Abort,
            other => return Err(Error::UnknownMessageType(other)),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::Hello => "HELLO",
            MsgType::Config => "CONFIG",
            MsgType::Open => "OPEN",
            MsgType::Ciphertext => "CIPHERTEXT",
            MsgType::Output => "OUTPUT",
            MsgType::Abort => "ABORT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub version: u16,
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Frame {
            version: PROTOCOL_VERSION,
            msg_type,
            payload,
        }
    }

    /// Size on the wire.
    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_be_bytes());
        out.push(self.msg_type as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses one frame from the front of `bytes`, returning it and the
    /// number of bytes used.
    pub fn decode(bytes: &[u8], cap: usize) -> Result<(Frame, usize)> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedFrame(format!(
                "{} header bytes of {HEADER_LEN}",
                bytes.len()
            )));
        }
        let header: [u8; HEADER_LEN] = bytes[..HEADER_LEN].try_into().unwrap();
        let (version, msg_type, len) = parse_header(&header, cap)?;
        let end = HEADER_LEN + len;
        if bytes.len() < end {
            return Err(Error::TruncatedFrame(format!(
                "{} payload bytes of {len}",
                bytes.len() - HEADER_LEN
            )));
        }
        Ok((
            Frame {
                version,
                msg_type,
                payload: bytes[HEADER_LEN..end].to_vec(),
            },
            end,
        ))
    }
}

fn parse_header(header: &[u8; HEADER_LEN], cap: usize) -> Result<(u16, MsgType, usize)> {
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = u16::from_be_bytes([header[4], header[5]]);
    let msg_type = MsgType::from_u8(header[6])?;
    let len = u32::from_be_bytes(header[7..11].try_into().unwrap()) as usize;
    if len > cap {
        return Err(Error::OversizeFrame { size: len, cap });
    }
    Ok((version, msg_type, len))
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame, cap: usize) -> Result<usize> {
    if frame.payload.len() > cap {
        return Err(Error::OversizeFrame {
            size: frame.payload.len(),
            cap,
        });
    }
    let bytes = frame.encode();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(bytes.len())
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::TruncatedFrame(format!("connection closed while reading {what}"))
        } else {
            Error::Io(e)
        }
    })
}

pub fn read_frame<R: Read>(r: &mut R, cap: usize) -> Result<Frame> {
    let mut header = [0u8; HEADER_LEN];
    read_full(r, &mut header, "frame header")?;
    let (version, msg_type, len) = parse_header(&header, cap)?;
    let mut payload = vec![0u8; len];
    read_full(r, &mut payload, "frame payload")?;
    Ok(Frame {
        version,
        msg_type,
        payload,
    })
}
