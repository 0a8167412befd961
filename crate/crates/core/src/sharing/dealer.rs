// SPDX-License-Identifier: Apache-2.0

//! Trusted-dealer generation of correlated randomness.
//!
//! The dealer sees every secret it hands out. It must not collude with
//! either party; use the homomorphic mode when that cannot be assumed.

use rand::Rng;

use super::{
    random_bits, random_ring, ring_matmul, sub_vec, DaBitBatch, PartyId, RandomnessBudget,
    Section, TripleBatch, TripleFlavor, TruncPairBatch,
};
use crate::ring::FixedPointConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DealerRequest {
    Triples { flavor: TripleFlavor, count: usize },
    DaBits { count: usize },
    TruncPairs { count: usize, frac_bits: u32 },
}

/// Requests covering exactly `budget`.
pub fn requests_for(budget: &RandomnessBudget, cfg: &FixedPointConfig) -> Vec<DealerRequest> {
    let mut out = Vec::new();
    if budget.elementwise > 0 {
        out.push(DealerRequest::Triples {
            flavor: TripleFlavor::Elementwise,
            count: budget.elementwise,
        });
    }
    for &(m, n, p) in &budget.matmul {
        out.push(DealerRequest::Triples {
            flavor: TripleFlavor::Matmul { m, n, p },
            count: 1,
        });
    }
    if budget.binary > 0 {
        out.push(DealerRequest::Triples {
            flavor: TripleFlavor::Binary,
            count: budget.binary,
        });
    }
    if budget.dabits > 0 {
        out.push(DealerRequest::DaBits {
            count: budget.dabits,
        });
    }
    if budget.truncpairs > 0 {
        out.push(DealerRequest::TruncPairs {
            count: budget.truncpairs,
            frac_bits: cfg.f(),
        });
    }
    out
}

/// Generates material for both parties. Each returned list contains only
/// that party's shares.
pub fn dealer_generate<R: Rng + ?Sized>(
    requests: &[DealerRequest],
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> (Vec<Section>, Vec<Section>) {
    let mut p0 = Vec::with_capacity(requests.len());
    let mut p1 = Vec::with_capacity(requests.len());
    for req in requests {
        let (s0, s1) = match *req {
            DealerRequest::Triples { flavor, count } => triples(flavor, count, cfg, rng),
            DealerRequest::DaBits { count } => dabits(count, cfg, rng),
            DealerRequest::TruncPairs { count, frac_bits } => truncpairs(count, frac_bits, cfg, rng),
        };
        p0.push(s0);
        p1.push(s1);
    }
    (p0, p1)
}

fn split<R: Rng + ?Sized>(cfg: &FixedPointConfig, secret: &[u64], rng: &mut R) -> (Vec<u64>, Vec<u64>) {
    let s0 = random_ring(cfg, secret.len(), rng);
    let s1 = sub_vec(cfg, secret, &s0);
    (s0, s1)
}

fn split_bits<R: Rng + ?Sized>(secret: &[u64], rng: &mut R) -> (Vec<u64>, Vec<u64>) {
    let s0: Vec<u64> = random_bits(secret.len(), rng).into_iter().map(u64::from).collect();
    let s1 = secret.iter().zip(&s0).map(|(&x, &r)| x ^ r).collect();
    (s0, s1)
}

fn triples<R: Rng + ?Sized>(
    flavor: TripleFlavor,
    count: usize,
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> (Section, Section) {
    let (sa, sb, _) = flavor.sizes();
    let (a, b, c) = match flavor {
        TripleFlavor::Elementwise => {
            let a = random_ring(cfg, count, rng);
            let b = random_ring(cfg, count, rng);
            let c = a.iter().zip(&b).map(|(&x, &y)| cfg.mul(x, y)).collect();
            (a, b, c)
        }
        TripleFlavor::Binary => {
            let a: Vec<u64> = random_bits(count, rng).into_iter().map(u64::from).collect();
            let b: Vec<u64> = random_bits(count, rng).into_iter().map(u64::from).collect();
            let c = a.iter().zip(&b).map(|(&x, &y)| x & y).collect();
            (a, b, c)
        }
        TripleFlavor::Matmul { m, n, p } => {
            let a = random_ring(cfg, count * sa, rng);
            let b = random_ring(cfg, count * sb, rng);
            let mut c = Vec::with_capacity(count * m * p);
            for i in 0..count {
                c.extend(ring_matmul(
                    cfg,
                    &a[i * sa..(i + 1) * sa],
                    &b[i * sb..(i + 1) * sb],
                    m,
                    n,
                    p,
                ));
            }
            (a, b, c)
        }
    };
    let ((a0, a1), (b0, b1), (c0, c1)) = if flavor == TripleFlavor::Binary {
        (split_bits(&a, rng), split_bits(&b, rng), split_bits(&c, rng))
    } else {
        (split(cfg, &a, rng), split(cfg, &b, rng), split(cfg, &c, rng))
    };
    let mk = |party, a, b, c| {
        Section::Triples(TripleBatch {
            party,
            flavor,
            count,
            a,
            b,
            c,
        })
    };
    (mk(PartyId::P0, a0, b0, c0), mk(PartyId::P1, a1, b1, c1))
}

fn dabits<R: Rng + ?Sized>(count: usize, cfg: &FixedPointConfig, rng: &mut R) -> (Section, Section) {
    let bits: Vec<u64> = random_bits(count, rng).into_iter().map(u64::from).collect();
    let (a0, a1) = split(cfg, &bits, rng);
    let (b0, b1) = split_bits(&bits, rng);
    let mk = |party, arith, boolean: Vec<u64>| {
        Section::DaBits(DaBitBatch {
            party,
            count,
            arith,
            boolean: boolean.into_iter().map(|b| b as u8).collect(),
        })
    };
    (mk(PartyId::P0, a0, b0), mk(PartyId::P1, a1, b1))
}

fn truncpairs<R: Rng + ?Sized>(
    count: usize,
    frac_bits: u32,
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> (Section, Section) {
    let r = random_ring(cfg, count, rng);
    let low_mask = (1u64 << frac_bits) - 1;
    let r_trunc: Vec<u64> = r.iter().map(|&x| cfg.trunc_floor(x, frac_bits)).collect();
    let r_msb: Vec<u64> = r.iter().map(|&x| cfg.msb(x)).collect();
    let r_lowv: Vec<u64> = r.iter().map(|&x| x & low_mask).collect();
    let (r0, r1) = split(cfg, &r, rng);
    let (t0, t1) = split(cfg, &r_trunc, rng);
    let (m0, m1) = split(cfg, &r_msb, rng);
    let l0: Vec<u64> = (0..count).map(|_| rng.gen::<u64>() & low_mask).collect();
    let l1: Vec<u64> = r_lowv.iter().zip(&l0).map(|(&x, &y)| x ^ y).collect();
    let mk = |party, r, r_trunc, r_msb, r_low| {
        Section::TruncPairs(TruncPairBatch {
            party,
            frac_bits,
            r,
            r_trunc,
            r_msb,
            r_low,
        })
    };
    (mk(PartyId::P0, r0, t0, m0, l0), mk(PartyId::P1, r1, t1, m1, l1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn pair(req: DealerRequest, cfg: &FixedPointConfig, seed: u64) -> (Section, Section) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (mut a, mut b) = dealer_generate(&[req], cfg, &mut rng);
        (a.pop().unwrap(), b.pop().unwrap())
    }

    #[test]
    fn elementwise_triples_hold() {
        let cfg = FixedPointConfig::default();
        let (Section::Triples(t0), Section::Triples(t1)) = pair(
            DealerRequest::Triples {
                flavor: TripleFlavor::Elementwise,
                count: 10_000,
            },
            &cfg,
            1,
        ) else {
            panic!()
        };
        for i in 0..10_000 {
            let a = cfg.add(t0.a[i], t1.a[i]);
            let b = cfg.add(t0.b[i], t1.b[i]);
            assert_eq!(cfg.mul(a, b), cfg.add(t0.c[i], t1.c[i]));
        }
        assert_ne!(t0.a, t1.a);
    }

    #[test]
    fn truncpairs_exhaustive_relation_k16() {
        let cfg = FixedPointConfig::new(16, 4).unwrap();
        let (Section::TruncPairs(p0), Section::TruncPairs(p1)) = pair(
            DealerRequest::TruncPairs {
                count: 1 << 16,
                frac_bits: 4,
            },
            &cfg,
            2,
        ) else {
            panic!()
        };
        for i in 0..p0.count() {
            let r = cfg.add(p0.r[i], p1.r[i]);
            let t = cfg.add(p0.r_trunc[i], p1.r_trunc[i]);
            assert_eq!(cfg.signed(t), cfg.signed(r).div_euclid(16));
            assert_eq!(cfg.add(p0.r_msb[i], p1.r_msb[i]), cfg.msb(r));
            assert_eq!(p0.r_low[i] ^ p1.r_low[i], r & 15);
        }
    }

    #[test]
    fn dabits_are_bits() {
        let cfg = FixedPointConfig::new(32, 12).unwrap();
        let (Section::DaBits(d0), Section::DaBits(d1)) =
            pair(DealerRequest::DaBits { count: 5000 }, &cfg, 3)
        else {
            panic!()
        };
        for i in 0..5000 {
            let a = cfg.add(d0.arith[i], d1.arith[i]);
            assert!(a <= 1);
            assert_eq!(a as u8, d0.boolean[i] ^ d1.boolean[i]);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = FixedPointConfig::default();
        let req = DealerRequest::Triples {
            flavor: TripleFlavor::Binary,
            count: 64,
        };
        assert_eq!(pair(req, &cfg, 7), pair(req, &cfg, 7));
        assert_ne!(pair(req, &cfg, 7), pair(req, &cfg, 8));
    }
}
