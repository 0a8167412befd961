// SPDX-License-Identifier: Apache-2.0

//! Online two-party protocols over additive shares.
//!
//! All operations are vectorized: a call processes a whole tensor and costs
//! a fixed number of communication rounds regardless of its length. Party 0
//! adds public constants; XOR-shared bits follow the same rule.
//!
//! Per element costs:
//!
//! | operation        | material                                          | rounds |
//! |------------------|---------------------------------------------------|--------|
//! | `mul`            | 1 elementwise triple                              | 1      |
//! | `and`            | 1 binary triple                                   | 1      |
//! | `b2a`            | 1 daBit                                           | 1      |
//! | `trunc_faithful` | 1 truncation pair, `f-1` binary triples, 1 daBit  | `f+1`  |
//! | `drelu`          | `k+1` daBits, `k-2` binary triples                | `k`    |
//! | `relu`           | `drelu` + 1 elementwise triple                    | `k+1`  |

mod graph;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Channel, MsgType};
use crate::ring::FixedPointConfig;
use crate::sharing::{add_vec, ring_matmul, sub_vec, PartyId, RandomnessStore};

pub use graph::{plan_budget, reveal_output, run_graph_secure, share_inputs, LocalSecret};

/// How products are rescaled by `2^f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncMode {
    /// Interactive and bit-exact; needs truncation pairs.
    Faithful,
    /// Each party shifts its own share. Off by at most one unit in the last
    /// place, except with probability about `|x| / 2^(k-1)`.
    Local,
}

pub(crate) fn ring_to_bytes(cfg: &FixedPointConfig, v: &[u64]) -> Vec<u8> {
    let w = cfg.elem_bytes();
    let mut out = Vec::with_capacity(v.len() * w);
    for &x in v {
        out.extend_from_slice(&x.to_le_bytes()[..w]);
    }
    out
}

pub(crate) fn ring_from_bytes(cfg: &FixedPointConfig, bytes: &[u8], n: usize) -> Result<Vec<u64>> {
    let w = cfg.elem_bytes();
    if bytes.len() != n * w {
        return Err(Error::Protocol(format!(
            "expected {} ring elements ({} bytes), got {} bytes",
            n,
            n * w,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(w)
        .map(|c| {
            let mut b = [0u8; 8];
            b[..w].copy_from_slice(c);
            cfg.reduce(u64::from_le_bytes(b))
        })
        .collect())
}

pub(crate) fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 8] |= (b & 1) << (i % 8);
    }
    out
}

pub(crate) fn unpack_bits(bytes: &[u8], n: usize) -> Result<Vec<u8>> {
    if bytes.len() != n.div_ceil(8) {
        return Err(Error::Protocol(format!(
            "expected {} packed bits, got {} bytes",
            n,
            bytes.len()
        )));
    }
    Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1).collect())
}

/// Opens `x` at both parties: one OPEN message each way.
pub fn open<T: Read + Write>(ch: &mut Channel<T>, cfg: &FixedPointConfig, x: &[u64]) -> Result<Vec<u64>> {
    let peer = ch.exchange(MsgType::Open, &ring_to_bytes(cfg, x))?;
    let peer = ring_from_bytes(cfg, &peer, x.len())?;
    Ok(add_vec(cfg, x, &peer))
}

/// Opens XOR-shared bits.
pub fn open_bits<T: Read + Write>(ch: &mut Channel<T>, x: &[u8]) -> Result<Vec<u8>> {
    let peer = ch.exchange(MsgType::Open, &pack_bits(x))?;
    let peer = unpack_bits(&peer, x.len())?;
    Ok(x.iter().zip(&peer).map(|(a, b)| a ^ b).collect())
}

/// Beaver multiplication with explicitly supplied triple shares.
pub fn beaver_mul<T: Read + Write>(
    ch: &mut Channel<T>,
    party: PartyId,
    cfg: &FixedPointConfig,
    x: &[u64],
    y: &[u64],
    (a, b, c): (&[u64], &[u64], &[u64]),
) -> Result<Vec<u64>> {
    let n = x.len();
    if y.len() != n || a.len() != n || b.len() != n || c.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "mul operands of lengths {} and {} with {} triples",
            n,
            y.len(),
            a.len()
        )));
    }
    let mut masked = sub_vec(cfg, x, a);
    masked.extend(sub_vec(cfg, y, b));
    let opened = open(ch, cfg, &masked)?;
    let (d, e) = opened.split_at(n);
    Ok((0..n)
        .map(|i| {
            let mut z = cfg.add(c[i], cfg.add(cfg.mul(d[i], b[i]), cfg.mul(e[i], a[i])));
            if party.is_p0() {
                z = cfg.add(z, cfg.mul(d[i], e[i]));
            }
            z
        })
        .collect())
}

/// Per-session protocol state: party, ring, truncation mode, the
/// correlated-randomness queue and the channel to the peer.
pub struct ProtocolState<'c, T> {
    party: PartyId,
    cfg: FixedPointConfig,
    trunc: TruncMode,
    store: RandomnessStore,
    ch: &'c mut Channel<T>,
}

impl<'c, T: Read + Write> ProtocolState<'c, T> {
    pub fn new(
        party: PartyId,
        cfg: FixedPointConfig,
        trunc: TruncMode,
        store: RandomnessStore,
        ch: &'c mut Channel<T>,
    ) -> Result<Self> {
        if store.party() != party {
            return Err(Error::BadRandomness(format!(
                "randomness for party {} used by party {}",
                store.party().index(),
                party.index()
            )));
        }
        if store.config() != cfg {
            return Err(Error::BadRandomness(format!(
                "randomness for {:?} used in a {:?} session",
                store.config(),
                cfg
            )));
        }
        Ok(ProtocolState {
            party,
            cfg,
            trunc,
            store,
            ch,
        })
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn config(&self) -> FixedPointConfig {
        self.cfg
    }

    pub fn trunc_mode(&self) -> TruncMode {
        self.trunc
    }

    pub fn store(&self) -> &RandomnessStore {
        &self.store
    }

    pub fn into_store(self) -> RandomnessStore {
        self.store
    }

    pub fn channel(&mut self) -> &mut Channel<T> {
        self.ch
    }

    fn is_p0(&self) -> bool {
        self.party.is_p0()
    }

    /// Share of a public constant.
    pub fn public(&self, v: u64) -> u64 {
        if self.is_p0() {
            self.cfg.reduce(v)
        } else {
            0
        }
    }

    pub fn open(&mut self, x: &[u64]) -> Result<Vec<u64>> {
        open(self.ch, &self.cfg, x)
    }

    pub fn open_bits(&mut self, x: &[u8]) -> Result<Vec<u8>> {
        open_bits(self.ch, x)
    }

    /// Elementwise product.
    pub fn mul(&mut self, x: &[u64], y: &[u64]) -> Result<Vec<u64>> {
        if x.len() != y.len() {
            return Err(Error::ShapeMismatch(format!(
                "mul of lengths {} and {}",
                x.len(),
                y.len()
            )));
        }
        let (a, b, c) = self.store.take_elementwise(x.len())?;
        beaver_mul(self.ch, self.party, &self.cfg, x, y, (&a, &b, &c))
    }

    /// `(m x n) * (n x p)` product, no truncation.
    pub fn matmul(&mut self, x: &[u64], y: &[u64], m: usize, n: usize, p: usize) -> Result<Vec<u64>> {
        if x.len() != m * n || y.len() != n * p {
            return Err(Error::ShapeMismatch(format!(
                "matmul {m}x{n} * {n}x{p} with operands of {} and {} elements",
                x.len(),
                y.len()
            )));
        }
        let (a, b, c) = self.store.take_matmul(m, n, p)?;
        let cfg = self.cfg;
        let mut masked = sub_vec(&cfg, x, &a);
        masked.extend(sub_vec(&cfg, y, &b));
        let opened = self.open(&masked)?;
        let (d, e) = opened.split_at(m * n);
        let db = ring_matmul(&cfg, d, &b, m, n, p);
        let ae = ring_matmul(&cfg, &a, e, m, n, p);
        let mut z = add_vec(&cfg, &add_vec(&cfg, &c, &db), &ae);
        if self.is_p0() {
            z = add_vec(&cfg, &z, &ring_matmul(&cfg, d, e, m, n, p));
        }
        Ok(z)
    }

    /// AND of XOR-shared bits.
    pub fn and(&mut self, x: &[u8], y: &[u8]) -> Result<Vec<u8>> {
        let n = x.len();
        let (a, b, c) = self.store.take_binary(n)?;
        let mut masked: Vec<u8> = x.iter().zip(&a).map(|(u, v)| u ^ v).collect();
        masked.extend(y.iter().zip(&b).map(|(u, v)| u ^ v));
        let opened = self.open_bits(&masked)?;
        let (d, e) = opened.split_at(n);
        let p0 = self.is_p0() as u8;
        Ok((0..n)
            .map(|i| c[i] ^ (d[i] & b[i]) ^ (e[i] & a[i]) ^ (p0 & d[i] & e[i]))
            .collect())
    }

    /// Converts XOR-shared bits to additive shares of the same bits.
    pub fn b2a(&mut self, t: &[u8]) -> Result<Vec<u64>> {
        let (da, db) = self.store.take_dabits(t.len())?;
        let masked: Vec<u8> = t.iter().zip(&db).map(|(x, d)| x ^ d).collect();
        let e = self.open_bits(&masked)?;
        let cfg = self.cfg;
        Ok((0..t.len())
            .map(|i| {
                // t = e xor d = e + d - 2ed
                let s = if e[i] == 1 { cfg.neg(da[i]) } else { da[i] };
                cfg.add(s, self.public(e[i] as u64))
            })
            .collect())
    }

    /// Shares of `[c mod 2^nbits < r mod 2^nbits]` for public `c` and
    /// XOR-shared bits of `r` (`r_bit(e, j)` is bit `j` of element `e`).
    /// Ripple borrow chain: `nbits - 1` ANDs per element.
    fn borrow_bits(&mut self, c: &[u64], nbits: u32, r_bit: impl Fn(usize, u32) -> u8) -> Result<Vec<u8>> {
        let n = c.len();
        if nbits == 0 {
            return Ok(vec![0; n]);
        }
        let mut borrow: Vec<u8> = (0..n)
            .map(|e| if c[e] & 1 == 0 { r_bit(e, 0) } else { 0 })
            .collect();
        for j in 1..nbits {
            let r: Vec<u8> = (0..n).map(|e| r_bit(e, j)).collect();
            let t = self.and(&r, &borrow)?;
            for e in 0..n {
                borrow[e] = if c[e] >> j & 1 == 0 {
                    r[e] ^ borrow[e] ^ t[e]
                } else {
                    t[e]
                };
            }
        }
        Ok(borrow)
    }

    /// Exact `floor(signed(x) / 2^f)`, valid for `|signed(x)| < 2^(k-2)`.
    pub fn trunc_faithful(&mut self, x: &[u64]) -> Result<Vec<u64>> {
        let n = x.len();
        let cfg = self.cfg;
        let (k, f) = (cfg.k(), cfg.f());
        let (r, r_trunc, r_msb, r_low) = self.store.take_truncpairs(n)?;
        let shift = 1u64 << (k - 2);
        let masked: Vec<u64> = (0..n)
            .map(|i| cfg.add(cfg.add(x[i], self.public(shift)), r[i]))
            .collect();
        let c = self.open(&masked)?;
        let b = self.borrow_bits(&c, f, |e, j| (r_low[e] >> j & 1) as u8)?;
        let b = self.b2a(&b)?;
        Ok((0..n)
            .map(|i| {
                let hi = (c[i] >> f).wrapping_sub(1u64 << (k - 2 - f));
                let mut z = cfg.sub(self.public(hi), cfg.add(r_trunc[i], b[i]));
                if cfg.msb(c[i]) == 1 {
                    z = cfg.sub(z, cfg.mul(r_msb[i], 1u64 << (k - f)));
                }
                z
            })
            .collect())
    }

    /// Non-interactive truncation.
    pub fn trunc_local(&self, x: &[u64]) -> Vec<u64> {
        trunc_local_share(self.party, &self.cfg, x)
    }

    pub fn trunc(&mut self, x: &[u64]) -> Result<Vec<u64>> {
        match self.trunc {
            TruncMode::Faithful => self.trunc_faithful(x),
            TruncMode::Local => Ok(self.trunc_local(x)),
        }
    }

    /// Additive shares of `[signed(x) >= 0]`.
    pub fn drelu(&mut self, x: &[u64]) -> Result<Vec<u64>> {
        let n = x.len();
        let cfg = self.cfg;
        let k = cfg.k();
        let ku = k as usize;
        let (da, db) = self.store.take_dabits(n * ku)?;
        let masked: Vec<u64> = (0..n)
            .map(|e| {
                let r = (0..ku).fold(0u64, |acc, j| cfg.add(acc, cfg.mul(da[e * ku + j], 1u64 << j)));
                cfg.add(x[e], r)
            })
            .collect();
        let c = self.open(&masked)?;
        let beta = self.borrow_bits(&c, k - 1, |e, j| db[e * ku + j as usize])?;
        let p0 = self.is_p0() as u8;
        let t: Vec<u8> = (0..n)
            .map(|e| beta[e] ^ db[e * ku + ku - 1] ^ (p0 & (1 ^ cfg.msb(c[e]) as u8)))
            .collect();
        self.b2a(&t)
    }

    pub fn relu(&mut self, x: &[u64]) -> Result<Vec<u64>> {
        let s = self.drelu(x)?;
        self.mul(x, &s)
    }

    /// Windowed maximum by a pairwise tournament, `max(a, b) = b + relu(a - b)`.
    /// `windows[o]` lists, for window offset `o`, the input index of every
    /// output position.
    pub fn maxpool(&mut self, x: &[u64], windows: &[Vec<usize>]) -> Result<Vec<u64>> {
        let cfg = self.cfg;
        let mut cands: Vec<Vec<u64>> = windows
            .iter()
            .map(|idx| idx.iter().map(|&i| x[i]).collect())
            .collect();
        let outputs = cands.first().map(Vec::len).unwrap_or(0);
        while cands.len() > 1 {
            let pairs = cands.len() / 2;
            let mut a = Vec::with_capacity(pairs * outputs);
            let mut b = Vec::with_capacity(pairs * outputs);
            for p in 0..pairs {
                a.extend_from_slice(&cands[2 * p]);
                b.extend_from_slice(&cands[2 * p + 1]);
            }
            let r = self.relu(&sub_vec(&cfg, &a, &b))?;
            let m = add_vec(&cfg, &b, &r);
            let mut next: Vec<Vec<u64>> = m.chunks(outputs.max(1)).map(<[u64]>::to_vec).collect();
            if cands.len() % 2 == 1 {
                next.push(cands.pop().unwrap());
            }
            cands = next;
        }
        Ok(cands.pop().unwrap_or_default())
    }
}

/// Local truncation of one party's share: party 0 shifts its share,
/// party 1 shifts the negation of its share and negates back.
pub fn trunc_local_share(party: PartyId, cfg: &FixedPointConfig, x: &[u64]) -> Vec<u64> {
    let f = cfg.f();
    x.iter()
        .map(|&v| {
            if party.is_p0() {
                v >> f
            } else {
                cfg.neg(cfg.neg(v) >> f)
            }
        })
        .collect()
}
