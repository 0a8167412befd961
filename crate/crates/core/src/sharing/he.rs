// SPDX-License-Identifier: Apache-2.0

//! Dealer-free preprocessing with additively homomorphic encryption.
//!
//! Party 1 (the data owner) holds the only keypair. For a product of shared
//! values it sends encryptions of its own shares; party 0 folds in its
//! shares homomorphically, adds a statistical mask `rho` that is far wider
//! than the cross terms, and returns a single ciphertext. Party 1 learns the
//! masked cross terms, party 0 sees only ciphertexts.
//!
//! Elementwise triple:
//!
//! ```text
//! P1 -> P0   Enc(a1), Enc(b1)
//! P0 -> P1   Enc(a1*b0 + b1*a0 + rho)
//! c0 = a0*b0 - rho,   c1 = a1*b1 + Dec(..)      (mod 2^k)
//! ```
//!
//! Binary triples use the same exchange on bits and keep results mod 2.

use std::io::{Read, Write};

use num_bigint::{BigUint, RandBigInt};
use rand::Rng;

use super::ahe::{required_modulus_bits, AheKeypair, AhePublicKey, Ciphertext, STAT_SECURITY_BITS};
use super::{
    random_bits, random_ring, DaBitBatch, PartyId, RandomnessBudget, RandomnessStore, Section,
    TripleBatch, TripleFlavor,
};
use crate::error::{Error, Result};
use crate::net::{Channel, MsgType};
use crate::ring::FixedPointConfig;

/// Triples per message pair during generation.
const BATCH: usize = 512;

/// Key material of one party: party 1 owns the keypair, party 0 only
/// receives the public key.
#[derive(Debug, Clone)]
pub enum HeKeys {
    Owner(Box<AheKeypair>),
    Peer(AhePublicKey),
}

impl HeKeys {
    pub fn public(&self) -> &AhePublicKey {
        match self {
            HeKeys::Owner(kp) => kp.public(),
            HeKeys::Peer(pk) => pk,
        }
    }

    fn owner(&self) -> Result<&AheKeypair> {
        match self {
            HeKeys::Owner(kp) => Ok(kp),
            HeKeys::Peer(_) => Err(Error::Protocol("only party 1 holds the secret key".into())),
        }
    }
}

/// Party 1 generates a keypair and sends the public key in a CONFIG
/// message; party 0 checks that its modulus is large enough for `k`.
pub fn he_setup<T: Read + Write, R: Rng + ?Sized>(
    ch: &mut Channel<T>,
    party: PartyId,
    cfg: &FixedPointConfig,
    modulus_bits: u64,
    rng: &mut R,
) -> Result<HeKeys> {
    let need = required_modulus_bits(cfg.k(), 1);
    match party {
        PartyId::P1 => {
            if modulus_bits < need {
                return Err(Error::AheParams(format!(
                    "a {modulus_bits}-bit modulus is too small for k={} (need {need})",
                    cfg.k()
                )));
            }
            let kp = AheKeypair::generate(modulus_bits, rng)?;
            ch.send(MsgType::Config, &kp.public().to_bytes())?;
            Ok(HeKeys::Owner(Box::new(kp)))
        }
        PartyId::P0 => {
            let pk = AhePublicKey::from_bytes(&ch.recv(MsgType::Config)?)?;
            if pk.modulus_bits() < need {
                return Err(Error::AheParams(format!(
                    "peer modulus of {} bits is too small for k={} (need {need})",
                    pk.modulus_bits(),
                    cfg.k()
                )));
            }
            Ok(HeKeys::Peer(pk))
        }
    }
}

fn check_terms(pk: &AhePublicKey, cfg: &FixedPointConfig, terms: usize) -> Result<()> {
    let need = required_modulus_bits(cfg.k(), terms);
    if pk.modulus_bits() < need {
        return Err(Error::AheParams(format!(
            "a {}-bit modulus cannot hold sums of {terms} products at k={} (need {need})",
            pk.modulus_bits(),
            cfg.k()
        )));
    }
    Ok(())
}

fn to_ring(cfg: &FixedPointConfig, v: &BigUint) -> u64 {
    cfg.reduce(v.iter_u64_digits().next().unwrap_or(0))
}

/// Dot product of party 0's ring vector `w` with party 1's ring vector `x`.
/// Party 1 passes `Input(x)` and receives `sum w_i x_i mod 2^k`; party 0
/// passes `Weights(w)` and receives `None`.
pub enum DotOperand<'a> {
    Weights(&'a [u64]),
    Input(&'a [u64]),
}

pub fn he_dot_product<T: Read + Write, R: Rng + ?Sized>(
    ch: &mut Channel<T>,
    keys: &HeKeys,
    cfg: &FixedPointConfig,
    operand: DotOperand<'_>,
    rng: &mut R,
) -> Result<Option<u64>> {
    let pk = keys.public();
    match operand {
        DotOperand::Input(x) => {
            let kp = keys.owner()?;
            check_terms(pk, cfg, x.len())?;
            let cts: Vec<Ciphertext> = x.iter().map(|&v| kp.encrypt(&BigUint::from(v), rng)).collect();
            ch.send(MsgType::Ciphertext, &pk.cts_to_bytes(&cts))?;
            let back = pk.cts_from_bytes(&ch.recv(MsgType::Ciphertext)?)?;
            if back.len() != 1 {
                return Err(Error::Protocol(format!("expected 1 ciphertext, got {}", back.len())));
            }
            Ok(Some(to_ring(cfg, &kp.decrypt(&back[0])?)))
        }
        DotOperand::Weights(w) => {
            let cts = pk.cts_from_bytes(&ch.recv(MsgType::Ciphertext)?)?;
            if cts.len() != w.len() {
                ch.abort("dot product length mismatch");
                return Err(Error::ShapeMismatch(format!(
                    "dot product of {} weights with {} ciphertexts",
                    w.len(),
                    cts.len()
                )));
            }
            check_terms(pk, cfg, w.len())?;
            // mask the bits above 2^k so party 1 learns only the ring value
            let mask_bits = cfg.k() as u64 + STAT_SECURITY_BITS + usize::BITS as u64 - w.len().leading_zeros() as u64;
            let mask = rng.gen_biguint(mask_bits) << cfg.k();
            let mut acc = pk.encrypt(&mask, rng);
            for (ct, &wi) in cts.iter().zip(w) {
                if wi != 0 {
                    acc = pk.add(&acc, &pk.scale(ct, &BigUint::from(wi))?)?;
                }
            }
            ch.send(MsgType::Ciphertext, &pk.ct_to_bytes(&acc))?;
            Ok(None)
        }
    }
}

/// Dealer-free triples of one flavor. Both parties call with the same
/// arguments; each receives its own shares.
pub fn he_triple_gen<T: Read + Write, R: Rng + ?Sized>(
    ch: &mut Channel<T>,
    party: PartyId,
    keys: &HeKeys,
    cfg: &FixedPointConfig,
    flavor: TripleFlavor,
    count: usize,
    rng: &mut R,
) -> Result<TripleBatch> {
    let mut out = TripleBatch::empty(party, flavor);
    match flavor {
        TripleFlavor::Elementwise | TripleFlavor::Binary => {
            let mut done = 0;
            while done < count {
                let n = BATCH.min(count - done);
                let part = scalar_batch(ch, party, keys, cfg, flavor == TripleFlavor::Binary, n, rng)?;
                out.count += n;
                out.a.extend(part.0);
                out.b.extend(part.1);
                out.c.extend(part.2);
                done += n;
            }
        }
        TripleFlavor::Matmul { m, n, p } => {
            for _ in 0..count {
                let (a, b, c) = matmul_one(ch, party, keys, cfg, m, n, p, rng)?;
                out.count += 1;
                out.a.extend(a);
                out.b.extend(b);
                out.c.extend(c);
            }
        }
    }
    Ok(out)
}

type Shares = (Vec<u64>, Vec<u64>, Vec<u64>);

fn scalar_batch<T: Read + Write, R: Rng + ?Sized>(
    ch: &mut Channel<T>,
    party: PartyId,
    keys: &HeKeys,
    cfg: &FixedPointConfig,
    binary: bool,
    n: usize,
    rng: &mut R,
) -> Result<Shares> {
    let pk = keys.public();
    let sample = |rng: &mut R| -> Vec<u64> {
        if binary {
            random_bits(n, rng).into_iter().map(u64::from).collect()
        } else {
            random_ring(cfg, n, rng)
        }
    };
    let a = sample(rng);
    let b = sample(rng);
    match party {
        PartyId::P1 => {
            let kp = keys.owner()?;
            let mut cts = Vec::with_capacity(2 * n);
            for &v in a.iter().chain(&b) {
                cts.push(kp.encrypt(&BigUint::from(v), rng));
            }
            ch.send(MsgType::Ciphertext, &pk.cts_to_bytes(&cts))?;
            let back = pk.cts_from_bytes(&ch.recv(MsgType::Ciphertext)?)?;
            if back.len() != n {
                return Err(Error::Protocol(format!("expected {n} ciphertexts, got {}", back.len())));
            }
            let mut c = Vec::with_capacity(n);
            for i in 0..n {
                let v = kp.decrypt(&back[i])?;
                c.push(if binary {
                    (a[i] & b[i]) ^ (v.bit(0) as u64)
                } else {
                    cfg.add(cfg.mul(a[i], b[i]), to_ring(cfg, &v))
                });
            }
            Ok((a, b, c))
        }
        PartyId::P0 => {
            let cts = pk.cts_from_bytes(&ch.recv(MsgType::Ciphertext)?)?;
            if cts.len() != 2 * n {
                return Err(Error::Protocol(format!(
                    "expected {} ciphertexts, got {}",
                    2 * n,
                    cts.len()
                )));
            }
            let rho_bits = if binary {
                STAT_SECURITY_BITS + 2
            } else {
                2 * cfg.k() as u64 + STAT_SECURITY_BITS + 1
            };
            let mut reply = Vec::with_capacity(n);
            let mut c = Vec::with_capacity(n);
            for i in 0..n {
                let rho = rng.gen_biguint(rho_bits);
                // Enc(rho) carries fresh randomness, which rerandomizes the sum.
                let mut acc = pk.encrypt(&rho, rng);
                if b[i] != 0 {
                    acc = pk.add(&acc, &pk.scale(&cts[i], &BigUint::from(b[i]))?)?;
                }
                if a[i] != 0 {
                    acc = pk.add(&acc, &pk.scale(&cts[n + i], &BigUint::from(a[i]))?)?;
                }
                reply.push(acc);
                c.push(if binary {
                    (a[i] & b[i]) ^ (rho.bit(0) as u64)
                } else {
                    cfg.sub(cfg.mul(a[i], b[i]), to_ring(cfg, &rho))
                });
            }
            ch.send(MsgType::Ciphertext, &pk.cts_to_bytes(&reply))?;
            Ok((a, b, c))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn matmul_one<T: Read + Write, R: Rng + ?Sized>(
    ch: &mut Channel<T>,
    party: PartyId,
    keys: &HeKeys,
    cfg: &FixedPointConfig,
    m: usize,
    n: usize,
    p: usize,
    rng: &mut R,
) -> Result<Shares> {
    let pk = keys.public();
    check_terms(pk, cfg, n)?;
    let a = random_ring(cfg, m * n, rng);
    let b = random_ring(cfg, n * p, rng);
    let mut c = super::ring_matmul(cfg, &a, &b, m, n, p);
    match party {
        PartyId::P1 => {
            let kp = keys.owner()?;
            let cts: Vec<Ciphertext> = a
                .iter()
                .chain(&b)
                .map(|&v| kp.encrypt(&BigUint::from(v), rng))
                .collect();
            ch.send(MsgType::Ciphertext, &pk.cts_to_bytes(&cts))?;
            let back = pk.cts_from_bytes(&ch.recv(MsgType::Ciphertext)?)?;
            if back.len() != m * p {
                return Err(Error::Protocol(format!(
                    "expected {} ciphertexts, got {}",
                    m * p,
                    back.len()
                )));
            }
            for (ci, ct) in c.iter_mut().zip(&back) {
                *ci = cfg.add(*ci, to_ring(cfg, &kp.decrypt(ct)?));
            }
        }
        PartyId::P0 => {
            let cts = pk.cts_from_bytes(&ch.recv(MsgType::Ciphertext)?)?;
            if cts.len() != m * n + n * p {
                return Err(Error::Protocol(format!(
                    "expected {} ciphertexts, got {}",
                    m * n + n * p,
                    cts.len()
                )));
            }
            let (ea, eb) = cts.split_at(m * n);
            let rho_bits = 2 * cfg.k() as u64
                + STAT_SECURITY_BITS
                + (usize::BITS - (2 * n).leading_zeros()) as u64;
            let mut reply = Vec::with_capacity(m * p);
            for i in 0..m {
                for j in 0..p {
                    let rho = rng.gen_biguint(rho_bits);
                    let mut acc = pk.encrypt(&rho, rng);
                    for l in 0..n {
                        // A1[i,l] * B0[l,j] + A0[i,l] * B1[l,j]
                        let b0 = b[l * p + j];
                        if b0 != 0 {
                            acc = pk.add(&acc, &pk.scale(&ea[i * n + l], &BigUint::from(b0))?)?;
                        }
                        let a0 = a[i * n + l];
                        if a0 != 0 {
                            acc = pk.add(&acc, &pk.scale(&eb[l * p + j], &BigUint::from(a0))?)?;
                        }
                    }
                    reply.push(acc);
                    let ci = &mut c[i * p + j];
                    *ci = cfg.sub(*ci, to_ring(cfg, &rho));
                }
            }
            ch.send(MsgType::Ciphertext, &pk.cts_to_bytes(&reply))?;
        }
    }
    Ok((a, b, c))
}

/// Dealer-free daBits. Each party samples a private bit `b_i` and keeps it
/// as its boolean share. Party 1 sends `Enc(b_1)`; party 0 returns
/// `Enc((b_0 xor b_1) + rho)`, computed as `Enc(b_1)` or `Enc(1 - b_1)`
/// depending on `b_0`, so the arithmetic shares are `-rho` and the
/// decryption.
pub fn he_dabit_gen<T: Read + Write, R: Rng + ?Sized>(
    ch: &mut Channel<T>,
    party: PartyId,
    keys: &HeKeys,
    cfg: &FixedPointConfig,
    count: usize,
    rng: &mut R,
) -> Result<DaBitBatch> {
    let pk = keys.public();
    let mut out = DaBitBatch {
        party,
        count: 0,
        arith: Vec::with_capacity(count),
        boolean: Vec::with_capacity(count),
    };
    while out.count < count {
        let n = BATCH.min(count - out.count);
        let bits = random_bits(n, rng);
        match party {
            PartyId::P1 => {
                let kp = keys.owner()?;
                let cts: Vec<Ciphertext> = bits
                    .iter()
                    .map(|&b| kp.encrypt(&BigUint::from(b), rng))
                    .collect();
                ch.send(MsgType::Ciphertext, &pk.cts_to_bytes(&cts))?;
                let back = pk.cts_from_bytes(&ch.recv(MsgType::Ciphertext)?)?;
                if back.len() != n {
                    return Err(Error::Protocol(format!("expected {n} ciphertexts, got {}", back.len())));
                }
                for ct in &back {
                    out.arith.push(to_ring(cfg, &kp.decrypt(ct)?));
                }
            }
            PartyId::P0 => {
                let cts = pk.cts_from_bytes(&ch.recv(MsgType::Ciphertext)?)?;
                if cts.len() != n {
                    return Err(Error::Protocol(format!("expected {n} ciphertexts, got {}", cts.len())));
                }
                let rho_bits = cfg.k() as u64 + STAT_SECURITY_BITS + 1;
                let one = BigUint::from(1u8);
                let mut reply = Vec::with_capacity(n);
                for (ct, &b) in cts.iter().zip(&bits) {
                    let rho = rng.gen_biguint(rho_bits);
                    let x = if b == 1 { pk.add_plain(&pk.neg(ct)?, &one)? } else { ct.clone() };
                    reply.push(pk.add(&x, &pk.encrypt(&rho, rng))?);
                    out.arith.push(cfg.neg(to_ring(cfg, &rho)));
                }
                ch.send(MsgType::Ciphertext, &pk.cts_to_bytes(&reply))?;
            }
        }
        out.boolean.extend(bits);
        out.count += n;
    }
    Ok(out)
}

/// Produces everything in `budget` with the peer and loads it into a store.
/// Truncation pairs are not available in this mode.
pub fn he_preprocess<T: Read + Write, R: Rng + ?Sized>(
    ch: &mut Channel<T>,
    party: PartyId,
    keys: &HeKeys,
    cfg: &FixedPointConfig,
    budget: &RandomnessBudget,
    rng: &mut R,
) -> Result<RandomnessStore> {
    if budget.truncpairs > 0 {
        return Err(Error::InvalidInput(
            "homomorphic preprocessing does not produce truncation pairs; use local truncation".into(),
        ));
    }
    let mut store = RandomnessStore::empty(party, *cfg);
    store.push(Section::Triples(he_triple_gen(
        ch,
        party,
        keys,
        cfg,
        TripleFlavor::Elementwise,
        budget.elementwise,
        rng,
    )?))?;
    store.push(Section::DaBits(he_dabit_gen(ch, party, keys, cfg, budget.dabits, rng)?))?;
    store.push(Section::Triples(he_triple_gen(
        ch,
        party,
        keys,
        cfg,
        TripleFlavor::Binary,
        budget.binary,
        rng,
    )?))?;
    for &(m, n, p) in &budget.matmul {
        store.push(Section::Triples(he_triple_gen(
            ch,
            party,
            keys,
            cfg,
            TripleFlavor::Matmul { m, n, p },
            1,
            rng,
        )?))?;
    }
    Ok(store)
}
