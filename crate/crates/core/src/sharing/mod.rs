// SPDX-License-Identifier: Apache-2.0

//! Additive secret sharing over `Z_{2^k}` and correlated randomness.
//!
//! Two preprocessing modes produce the same material types:
//!
//! * [`dealer`]: a trusted third party samples everything. Fast, but it
//!   assumes a non-colluding dealer, so it is meant for testing.
//! * [`he`]: the two parties produce triples and daBits themselves using
//!   additively homomorphic encryption ([`ahe`]).

pub mod ahe;
pub mod crnd;
pub mod dealer;
pub mod he;
mod material;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::{FixedPointConfig, PlainTensor};

pub use material::{
    Consumption, DaBitBatch, MaterialKind, RandomnessBudget, RandomnessStore, Section,
    TripleBatch, TripleFlavor, TruncPairBatch,
};

/// Which side of a two-party computation a share belongs to. Party 0 is the
/// model owner and adds public constants; party 1 is the data owner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyId {
    P0,
    P1,
}

impl PartyId {
    pub fn index(self) -> usize {
        match self {
            PartyId::P0 => 0,
            PartyId::P1 => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(PartyId::P0),
            1 => Ok(PartyId::P1),
            _ => Err(Error::InvalidInput(format!("party index {i} is not 0 or 1"))),
        }
    }

    pub fn other(self) -> Self {
        match self {
            PartyId::P0 => PartyId::P1,
            PartyId::P1 => PartyId::P0,
        }
    }

    pub fn is_p0(self) -> bool {
        self == PartyId::P0
    }
}

/// One party's additive share of a tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdditiveShare {
    pub party: PartyId,
    pub payload: PlainTensor,
    pub config: FixedPointConfig,
}

/// Splits `secret` into a uniform share for party 0 and
/// `secret - share0` for party 1.
pub fn share<R: Rng + ?Sized>(
    secret: &PlainTensor,
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> (AdditiveShare, AdditiveShare) {
    let s0: Vec<u64> = (0..secret.len()).map(|_| cfg.reduce(rng.gen())).collect();
    let s1: Vec<u64> = secret
        .data
        .iter()
        .zip(&s0)
        .map(|(&v, &r)| cfg.sub(v, r))
        .collect();
    let mk = |party, data| AdditiveShare {
        party,
        payload: PlainTensor {
            shape: secret.shape.clone(),
            data,
        },
        config: *cfg,
    };
    (mk(PartyId::P0, s0), mk(PartyId::P1, s1))
}

pub fn reconstruct(s0: &AdditiveShare, s1: &AdditiveShare) -> Result<PlainTensor> {
    if s0.party == s1.party {
        return Err(Error::ShareMismatch(format!(
            "both shares belong to party {}",
            s0.party.index()
        )));
    }
    if s0.config != s1.config {
        return Err(Error::ShareMismatch(format!(
            "configs differ: {:?} vs {:?}",
            s0.config, s1.config
        )));
    }
    if s0.payload.shape != s1.payload.shape {
        return Err(Error::ShareMismatch(format!(
            "shapes differ: {:?} vs {:?}",
            s0.payload.shape, s1.payload.shape
        )));
    }
    let cfg = s0.config;
    Ok(PlainTensor {
        shape: s0.payload.shape.clone(),
        data: add_vec(&cfg, &s0.payload.data, &s1.payload.data),
    })
}

pub(crate) fn add_vec(cfg: &FixedPointConfig, a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(&x, &y)| cfg.add(x, y)).collect()
}

pub(crate) fn sub_vec(cfg: &FixedPointConfig, a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(&x, &y)| cfg.sub(x, y)).collect()
}

pub(crate) fn random_ring<R: Rng + ?Sized>(cfg: &FixedPointConfig, n: usize, rng: &mut R) -> Vec<u64> {
    (0..n).map(|_| cfg.reduce(rng.gen())).collect()
}

pub(crate) fn random_bits<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u8> {
    (0..n).map(|_| rng.gen::<u8>() & 1).collect()
}

/// Row-major `(m x n) * (n x p)` product in the ring.
pub(crate) fn ring_matmul(
    cfg: &FixedPointConfig,
    a: &[u64],
    b: &[u64],
    m: usize,
    n: usize,
    p: usize,
) -> Vec<u64> {
    let mut out = vec![0u64; m * p];
    for i in 0..m {
        for l in 0..n {
            let av = a[i * n + l];
            if av == 0 {
                continue;
            }
            let row = &b[l * p..(l + 1) * p];
            for (o, &bv) in out[i * p..(i + 1) * p].iter_mut().zip(row) {
                *o = o.wrapping_add(av.wrapping_mul(bv));
            }
        }
    }
    for o in &mut out {
        *o = cfg.reduce(*o);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn cfg(k: u32) -> FixedPointConfig {
        FixedPointConfig::new(k, 4).unwrap()
    }

    #[test]
    fn share_reconstruct_identity() {
        let c = cfg(64);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let secret = PlainTensor::new(vec![2, 3], vec![0, 1, 2, u64::MAX, 42, 7]).unwrap();
        let (s0, s1) = share(&secret, &c, &mut rng);
        assert_eq!(reconstruct(&s0, &s1).unwrap(), secret);
        assert_eq!(reconstruct(&s1, &s0).unwrap(), secret);

        let zero = PlainTensor::zeros(vec![5]);
        let (z0, z1) = share(&zero, &c, &mut rng);
        assert!(z0.payload.data.iter().zip(&z1.payload.data).all(|(&a, &b)| c.add(a, b) == 0));
    }

    #[test]
    fn reconstruct_wraps() {
        let c = cfg(16);
        let mk = |party, v| AdditiveShare {
            party,
            payload: PlainTensor::new(vec![1], vec![v]).unwrap(),
            config: c,
        };
        let out = reconstruct(&mk(PartyId::P0, 3), &mk(PartyId::P1, (1 << 16) - 1)).unwrap();
        assert_eq!(out.data, vec![2]);
    }

    #[test]
    fn reconstruct_errors() {
        let c = cfg(16);
        let mk = |party, shape: Vec<usize>, config| AdditiveShare {
            party,
            payload: PlainTensor::zeros(shape),
            config,
        };
        assert!(reconstruct(&mk(PartyId::P0, vec![2], c), &mk(PartyId::P1, vec![3], c)).is_err());
        assert!(reconstruct(&mk(PartyId::P0, vec![2], c), &mk(PartyId::P0, vec![2], c)).is_err());
        assert!(reconstruct(&mk(PartyId::P0, vec![2], c), &mk(PartyId::P1, vec![2], cfg(32))).is_err());
    }

    #[test]
    fn share0_is_uniform_k8() {
        // chi-square over 256 bins, 10^5 draws of a fixed secret;
        // 310.457 is the 0.99 quantile of chi2 with 255 degrees of freedom.
        let c = FixedPointConfig::new(8, 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        let secret = PlainTensor::new(vec![1], vec![77]).unwrap();
        let mut bins = [0u64; 256];
        let draws = 100_000;
        for _ in 0..draws {
            let (s0, s1) = share(&secret, &c, &mut rng);
            bins[s0.payload.data[0] as usize] += 1;
            assert_eq!(c.add(s0.payload.data[0], s1.payload.data[0]), 77);
        }
        let expected = draws as f64 / 256.0;
        let chi2: f64 = bins
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 310.457, "chi2 = {chi2}");
    }

    #[test]
    fn matmul_small() {
        let c = cfg(64);
        // [1 2; 3 4] * [5; 6] = [17; 39]
        assert_eq!(ring_matmul(&c, &[1, 2, 3, 4], &[5, 6], 2, 2, 1), vec![17, 39]);
    }
}
