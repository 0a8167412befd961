// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::PartyId;
use crate::error::{Error, Result};
use crate::ring::FixedPointConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TripleFlavor {
    /// `c = a * b` elementwise in the ring.
    Elementwise,
    /// `C = A B` with `A: m x n`, `B: n x p`.
    Matmul { m: usize, n: usize, p: usize },
    /// Boolean AND triples: bits with `c = a & b` under XOR sharing.
    Binary,
}

impl TripleFlavor {
    /// Element counts of `a`, `b`, `c` in one triple.
    pub fn sizes(&self) -> (usize, usize, usize) {
        match *self {
            TripleFlavor::Elementwise | TripleFlavor::Binary => (1, 1, 1),
            TripleFlavor::Matmul { m, n, p } => (m * n, n * p, m * p),
        }
    }
}

/// One party's shares of `count` Beaver triples, concatenated.
/// Binary triples hold single bits (0/1) in each slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleBatch {
    pub party: PartyId,
    pub flavor: TripleFlavor,
    pub count: usize,
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    pub c: Vec<u64>,
}

impl TripleBatch {
    pub fn empty(party: PartyId, flavor: TripleFlavor) -> Self {
        TripleBatch {
            party,
            flavor,
            count: 0,
            a: Vec::new(),
            b: Vec::new(),
            c: Vec::new(),
        }
    }

    /// Shares of triple `i`.
    pub fn get(&self, i: usize) -> (&[u64], &[u64], &[u64]) {
        let (sa, sb, sc) = self.flavor.sizes();
        (
            &self.a[i * sa..(i + 1) * sa],
            &self.b[i * sb..(i + 1) * sb],
            &self.c[i * sc..(i + 1) * sc],
        )
    }

    fn append(&mut self, other: TripleBatch) {
        self.count += other.count;
        self.a.extend(other.a);
        self.b.extend(other.b);
        self.c.extend(other.c);
    }
}

/// One party's shares of `count` daBits: an arithmetic share in `Z_{2^k}`
/// and an XOR share of the same bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaBitBatch {
    pub party: PartyId,
    pub count: usize,
    pub arith: Vec<u64>,
    pub boolean: Vec<u8>,
}

/// One party's shares of truncation pairs: a random `r`,
/// `floor(signed(r) / 2^f)`, the top bit of `r`, and an XOR sharing of the
/// low `f` bits of `r` packed into a word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncPairBatch {
    pub party: PartyId,
    pub frac_bits: u32,
    pub r: Vec<u64>,
    pub r_trunc: Vec<u64>,
    pub r_msb: Vec<u64>,
    pub r_low: Vec<u64>,
}

impl TruncPairBatch {
    pub fn count(&self) -> usize {
        self.r.len()
    }
}

/// A homogeneous block of correlated randomness, the unit stored in
/// `.crnd` files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Section {
    Triples(TripleBatch),
    DaBits(DaBitBatch),
    TruncPairs(TruncPairBatch),
}

impl Section {
    pub fn party(&self) -> PartyId {
        match self {
            Section::Triples(t) => t.party,
            Section::DaBits(d) => d.party,
            Section::TruncPairs(t) => t.party,
        }
    }

    pub fn count(&self) -> usize {
        match self {
            Section::Triples(t) => t.count,
            Section::DaBits(d) => d.count,
            Section::TruncPairs(t) => t.count(),
        }
    }

    pub fn kind(&self) -> MaterialKind {
        match self {
            Section::Triples(t) => match t.flavor {
                TripleFlavor::Elementwise => MaterialKind::Elementwise,
                TripleFlavor::Matmul { .. } => MaterialKind::Matmul,
                TripleFlavor::Binary => MaterialKind::Binary,
            },
            Section::DaBits(_) => MaterialKind::DaBit,
            Section::TruncPairs(_) => MaterialKind::TruncPair,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaterialKind {
    Elementwise,
    Matmul,
    Binary,
    DaBit,
    TruncPair,
}

impl MaterialKind {
    pub fn name(self) -> &'static str {
        match self {
            MaterialKind::Elementwise => "elementwise triples",
            MaterialKind::Matmul => "matmul triples",
            MaterialKind::Binary => "binary triples",
            MaterialKind::DaBit => "daBits",
            MaterialKind::TruncPair => "truncation pairs",
        }
    }
}

/// How much of each kind of material a computation needs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomnessBudget {
    pub elementwise: usize,
    pub binary: usize,
    pub dabits: usize,
    pub truncpairs: usize,
    /// Matmul triple dimensions in consumption order.
    pub matmul: Vec<(usize, usize, usize)>,
}

impl RandomnessBudget {
    pub fn is_empty(&self) -> bool {
        self.elementwise == 0
            && self.binary == 0
            && self.dabits == 0
            && self.truncpairs == 0
            && self.matmul.is_empty()
    }
}

/// A contiguous range of one material kind handed out by the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Consumption {
    pub kind: MaterialKind,
    pub start: usize,
    pub len: usize,
}

/// One party's `(r, r_trunc, r_msb, r_low)` truncation-pair shares.
pub type TruncPairShares = (Vec<u64>, Vec<u64>, Vec<u64>, Vec<u64>);

/// Per-party queue of correlated randomness. Every item is handed out at
/// most once; cursors only move forward.
#[derive(Debug, Clone)]
pub struct RandomnessStore {
    party: PartyId,
    cfg: FixedPointConfig,
    elementwise: TripleBatch,
    binary: TripleBatch,
    matmul: Vec<TripleBatch>,
    dabits: DaBitBatch,
    truncpairs: TruncPairBatch,
    cursors: [usize; 5],
    log: Vec<Consumption>,
}

fn slot(kind: MaterialKind) -> usize {
    match kind {
        MaterialKind::Elementwise => 0,
        MaterialKind::Matmul => 1,
        MaterialKind::Binary => 2,
        MaterialKind::DaBit => 3,
        MaterialKind::TruncPair => 4,
    }
}

/// Elementwise triple shares `(a, b, c)`.
pub type TripleShares = (Vec<u64>, Vec<u64>, Vec<u64>);

impl RandomnessStore {
    pub fn empty(party: PartyId, cfg: FixedPointConfig) -> Self {
        RandomnessStore {
            party,
            cfg,
            elementwise: TripleBatch::empty(party, TripleFlavor::Elementwise),
            binary: TripleBatch::empty(party, TripleFlavor::Binary),
            matmul: Vec::new(),
            dabits: DaBitBatch {
                party,
                count: 0,
                arith: Vec::new(),
                boolean: Vec::new(),
            },
            truncpairs: TruncPairBatch {
                party,
                frac_bits: cfg.f(),
                r: Vec::new(),
                r_trunc: Vec::new(),
                r_msb: Vec::new(),
                r_low: Vec::new(),
            },
            cursors: [0; 5],
            log: Vec::new(),
        }
    }

    pub fn from_sections(
        party: PartyId,
        cfg: FixedPointConfig,
        sections: impl IntoIterator<Item = Section>,
    ) -> Result<Self> {
        let mut store = Self::empty(party, cfg);
        for s in sections {
            store.push(s)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, section: Section) -> Result<()> {
        if section.party() != self.party {
            return Err(Error::BadRandomness(format!(
                "section for party {} loaded by party {}",
                section.party().index(),
                self.party.index()
            )));
        }
        match section {
            Section::Triples(t) => match t.flavor {
                TripleFlavor::Elementwise => self.elementwise.append(t),
                TripleFlavor::Binary => self.binary.append(t),
                TripleFlavor::Matmul { .. } => {
                    for i in 0..t.count {
                        let (a, b, c) = t.get(i);
                        self.matmul.push(TripleBatch {
                            party: t.party,
                            flavor: t.flavor,
                            count: 1,
                            a: a.to_vec(),
                            b: b.to_vec(),
                            c: c.to_vec(),
                        });
                    }
                }
            },
            Section::DaBits(d) => {
                self.dabits.count += d.count;
                self.dabits.arith.extend(d.arith);
                self.dabits.boolean.extend(d.boolean);
            }
            Section::TruncPairs(t) => {
                if t.frac_bits != self.cfg.f() {
                    return Err(Error::BadRandomness(format!(
                        "truncation pairs for f={} but session uses f={}",
                        t.frac_bits,
                        self.cfg.f()
                    )));
                }
                self.truncpairs.r.extend(t.r);
                self.truncpairs.r_trunc.extend(t.r_trunc);
                self.truncpairs.r_msb.extend(t.r_msb);
                self.truncpairs.r_low.extend(t.r_low);
            }
        }
        Ok(())
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn config(&self) -> FixedPointConfig {
        self.cfg
    }

    fn total(&self, kind: MaterialKind) -> usize {
        match kind {
            MaterialKind::Elementwise => self.elementwise.count,
            MaterialKind::Matmul => self.matmul.len(),
            MaterialKind::Binary => self.binary.count,
            MaterialKind::DaBit => self.dabits.count,
            MaterialKind::TruncPair => self.truncpairs.count(),
        }
    }

    fn claim(&mut self, kind: MaterialKind, n: usize) -> Result<usize> {
        let start = self.cursors[slot(kind)];
        let available = self.total(kind) - start;
        if n > available {
            return Err(Error::Exhausted {
                kind: kind.name(),
                needed: n,
                available,
            });
        }
        self.cursors[slot(kind)] += n;
        if n > 0 {
            self.log.push(Consumption {
                kind,
                start,
                len: n,
            });
        }
        Ok(start)
    }

    pub fn take_elementwise(&mut self, n: usize) -> Result<TripleShares> {
        let s = self.claim(MaterialKind::Elementwise, n)?;
        let t = &self.elementwise;
        Ok((
            t.a[s..s + n].to_vec(),
            t.b[s..s + n].to_vec(),
            t.c[s..s + n].to_vec(),
        ))
    }

    pub fn take_binary(&mut self, n: usize) -> Result<(Vec<u8>, Vec<u8>, Vec<u8>)> {
        let s = self.claim(MaterialKind::Binary, n)?;
        let t = &self.binary;
        let bits = |v: &[u64]| v.iter().map(|&x| x as u8).collect::<Vec<u8>>();
        Ok((bits(&t.a[s..s + n]), bits(&t.b[s..s + n]), bits(&t.c[s..s + n])))
    }

    pub fn take_matmul(&mut self, m: usize, n: usize, p: usize) -> Result<TripleShares> {
        let want = TripleFlavor::Matmul { m, n, p };
        let cursor = self.cursors[slot(MaterialKind::Matmul)];
        if let Some(t) = self.matmul.get(cursor) {
            if t.flavor != want {
                return Err(Error::BadRandomness(format!(
                    "next matmul triple is {:?}, needed {want:?}",
                    t.flavor
                )));
            }
        }
        let s = self.claim(MaterialKind::Matmul, 1)?;
        let t = &self.matmul[s];
        Ok((t.a.clone(), t.b.clone(), t.c.clone()))
    }

    pub fn take_dabits(&mut self, n: usize) -> Result<(Vec<u64>, Vec<u8>)> {
        let s = self.claim(MaterialKind::DaBit, n)?;
        Ok((
            self.dabits.arith[s..s + n].to_vec(),
            self.dabits.boolean[s..s + n].to_vec(),
        ))
    }

    /// Returns `(r, r_trunc, r_msb, r_low)` shares for `n` pairs.
    pub fn take_truncpairs(&mut self, n: usize) -> Result<TruncPairShares> {
        let s = self.claim(MaterialKind::TruncPair, n)?;
        let t = &self.truncpairs;
        Ok((
            t.r[s..s + n].to_vec(),
            t.r_trunc[s..s + n].to_vec(),
            t.r_msb[s..s + n].to_vec(),
            t.r_low[s..s + n].to_vec(),
        ))
    }

    /// What is still unconsumed.
    pub fn remaining(&self) -> RandomnessBudget {
        let left = |k: MaterialKind| self.total(k) - self.cursors[slot(k)];
        RandomnessBudget {
            elementwise: left(MaterialKind::Elementwise),
            binary: left(MaterialKind::Binary),
            dabits: left(MaterialKind::DaBit),
            truncpairs: left(MaterialKind::TruncPair),
            matmul: self.matmul[self.cursors[slot(MaterialKind::Matmul)]..]
                .iter()
                .map(|t| match t.flavor {
                    TripleFlavor::Matmul { m, n, p } => (m, n, p),
                    _ => unreachable!(),
                })
                .collect(),
        }
    }

    pub fn consumption_log(&self) -> &[Consumption] {
        &self.log
    }

    /// Checks that no item was handed out twice: per kind, consumed ranges
    /// are disjoint and strictly increasing.
    pub fn audit(&self) -> Result<()> {
        let mut next = [0usize; 5];
        for c in &self.log {
            let i = slot(c.kind);
            if c.start < next[i] {
                return Err(Error::BadRandomness(format!(
                    "{} index {} consumed twice",
                    c.kind.name(),
                    c.start
                )));
            }
            next[i] = c.start + c.len;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::dealer::{dealer_generate, DealerRequest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn store_hands_out_each_item_once() {
        let cfg = FixedPointConfig::new(32, 8).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (p0, _) = dealer_generate(
            &[
                DealerRequest::Triples {
                    flavor: TripleFlavor::Elementwise,
                    count: 10,
                },
                DealerRequest::Triples {
                    flavor: TripleFlavor::Matmul { m: 2, n: 3, p: 1 },
                    count: 2,
                },
                DealerRequest::DaBits { count: 4 },
            ],
            &cfg,
            &mut rng,
        );
        let mut store = RandomnessStore::from_sections(PartyId::P0, cfg, p0).unwrap();
        let (a1, _, _) = store.take_elementwise(4).unwrap();
        let (a2, _, _) = store.take_elementwise(6).unwrap();
        assert_ne!(a1[0], a2[0]);
        assert!(matches!(
            store.take_elementwise(1),
            Err(Error::Exhausted { needed: 1, available: 0, .. })
        ));
        assert!(store.take_matmul(3, 2, 1).is_err());
        store.take_matmul(2, 3, 1).unwrap();
        assert_eq!(store.remaining().matmul, vec![(2, 3, 1)]);
        store.take_dabits(4).unwrap();
        store.audit().unwrap();
        assert_eq!(store.consumption_log().len(), 4);
    }

    #[test]
    fn wrong_party_rejected() {
        let cfg = FixedPointConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (_, p1) = dealer_generate(&[DealerRequest::DaBits { count: 1 }], &cfg, &mut rng);
        assert!(RandomnessStore::from_sections(PartyId::P0, cfg, p1).is_err());
    }
}
