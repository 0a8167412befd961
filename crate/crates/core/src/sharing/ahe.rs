// SPDX-License-Identifier: Apache-2.0

//! Paillier encryption: additively homomorphic over `Z_n`.
//!
//! With `g = n + 1`, `Enc(m; r) = (1 + m n) r^n mod n^2`. Ciphertexts
//! multiply to add plaintexts and exponentiate to scale them. The key owner
//! encrypts and decrypts through CRT over `p^2` and `q^2`.
//!
//! Every ciphertext records an 8-byte fingerprint of the public key it was
//! made under, so decrypting with the wrong key is an error instead of
//! silent garbage.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default modulus size for real sessions.
pub const DEFAULT_MODULUS_BITS: u64 = 2048;
/// Statistical masking parameter, in bits.
pub const STAT_SECURITY_BITS: u64 = 40;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AhePublicKey {
    n: BigUint,
    n_sq: BigUint,
    key_id: [u8; 8],
}

#[derive(Debug, Clone)]
pub struct AheSecretKey {
    p: BigUint,
    q: BigUint,
    p_sq: BigUint,
    q_sq: BigUint,
    /// `n mod phi(p^2)` and `n mod phi(q^2)` for CRT encryption.
    n_mod_phi_p: BigUint,
    n_mod_phi_q: BigUint,
    hp: BigUint,
    hq: BigUint,
    q_inv_p: BigUint,
    q_sq_inv_p_sq: BigUint,
}

#[derive(Debug, Clone)]
pub struct AheKeypair {
    pk: AhePublicKey,
    sk: AheSecretKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    c: BigUint,
    key_id: [u8; 8],
}

impl Ciphertext {
    pub fn key_id(&self) -> [u8; 8] {
        self.key_id
    }
}

const SMALL_PRIMES: [u32; 53] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Miller-Rabin with `rounds` random bases after trial division.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    if n.is_even() {
        return *n == two;
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn random_prime<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    loop {
        let mut cand = rng.gen_biguint(bits);
        cand.set_bit(bits - 1, true);
        cand.set_bit(bits - 2, true);
        cand.set_bit(0, true);
        if is_probable_prime(&cand, 32, rng) {
            return cand;
        }
    }
}

fn modinv(a: &BigUint, m: &BigUint) -> BigUint {
    a.modinv(m).expect("coprime by construction")
}

impl AhePublicKey {
    pub fn from_modulus(n: BigUint) -> Result<Self> {
        if n.bits() < 64 || n.is_even() {
            return Err(Error::AheParams(format!(
                "modulus of {} bits is not a valid Paillier modulus",
                n.bits()
            )));
        }
        let n_sq = &n * &n;
        let digest = Sha256::digest(n.to_bytes_be());
        let mut key_id = [0u8; 8];
        key_id.copy_from_slice(&digest[..8]);
        Ok(AhePublicKey { n, n_sq, key_id })
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn modulus_bits(&self) -> u64 {
        self.n.bits()
    }

    pub fn key_id(&self) -> [u8; 8] {
        self.key_id
    }

    /// Width of a serialized ciphertext.
    pub fn ciphertext_bytes(&self) -> usize {
        (self.n_sq.bits() as usize).div_ceil(8)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.n.to_bytes_be()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_modulus(BigUint::from_bytes_be(bytes))
    }

    fn wrap(&self, c: BigUint) -> Ciphertext {
        Ciphertext {
            c,
            key_id: self.key_id,
        }
    }

    fn random_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        loop {
            let r = rng.gen_biguint_below(&self.n);
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    /// `(1 + m n) mod n^2`, the deterministic part of an encryption.
    fn encode_plain(&self, m: &BigUint) -> BigUint {
        ((m % &self.n) * &self.n + 1u32) % &self.n_sq
    }

    pub fn encrypt<R: Rng + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Ciphertext {
        let rn = self.random_unit(rng).modpow(&self.n, &self.n_sq);
        self.wrap(self.encode_plain(m) * rn % &self.n_sq)
    }

    /// Key binding and range.
    fn check(&self, ct: &Ciphertext) -> Result<()> {
        if ct.key_id != self.key_id {
            return Err(Error::WrongKey);
        }
        if ct.c.is_zero() || ct.c >= self.n_sq {
            return Err(Error::Ciphertext("value outside (0, n^2)".into()));
        }
        Ok(())
    }

    /// Checks range, invertibility and key binding. Applied to every
    /// ciphertext parsed from the wire.
    pub fn validate(&self, ct: &Ciphertext) -> Result<()> {
        self.check(ct)?;
        if !ct.c.gcd(&self.n).is_one() {
            return Err(Error::Ciphertext("value not invertible mod n".into()));
        }
        Ok(())
    }

    /// Plaintext addition.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.wrap(&a.c * &b.c % &self.n_sq))
    }

    /// Multiplies the plaintext by a public scalar.
    pub fn scale(&self, a: &Ciphertext, s: &BigUint) -> Result<Ciphertext> {
        self.check(a)?;
        Ok(self.wrap(a.c.modpow(s, &self.n_sq)))
    }

    /// Encryption of `-m mod n`, by inverting the ciphertext mod `n^2`.
    pub fn neg(&self, a: &Ciphertext) -> Result<Ciphertext> {
        self.check(a)?;
        let inv = a
            .c
            .modinv(&self.n_sq)
            .ok_or_else(|| Error::Ciphertext("ciphertext is not a unit mod n^2".into()))?;
        Ok(self.wrap(inv))
    }

    /// Adds a public plaintext without fresh randomness.
    pub fn add_plain(&self, a: &Ciphertext, m: &BigUint) -> Result<Ciphertext> {
        self.check(a)?;
        Ok(self.wrap(&a.c * self.encode_plain(m) % &self.n_sq))
    }

    /// Multiplies in a fresh encryption of zero.
    pub fn rerandomize<R: Rng + ?Sized>(&self, a: &Ciphertext, rng: &mut R) -> Result<Ciphertext> {
        self.check(a)?;
        let rn = self.random_unit(rng).modpow(&self.n, &self.n_sq);
        Ok(self.wrap(&a.c * rn % &self.n_sq))
    }

    /// Big-endian, fixed width.
    pub fn ct_to_bytes(&self, ct: &Ciphertext) -> Vec<u8> {
        let raw = ct.c.to_bytes_be();
        let width = self.ciphertext_bytes();
        let mut out = vec![0u8; width - raw.len()];
        out.extend_from_slice(&raw);
        out
    }

    pub fn ct_from_bytes(&self, bytes: &[u8]) -> Result<Ciphertext> {
        if bytes.len() != self.ciphertext_bytes() {
            return Err(Error::Ciphertext(format!(
                "expected {} bytes, got {}",
                self.ciphertext_bytes(),
                bytes.len()
            )));
        }
        let ct = self.wrap(BigUint::from_bytes_be(bytes));
        self.validate(&ct)?;
        Ok(ct)
    }

    pub fn cts_to_bytes(&self, cts: &[Ciphertext]) -> Vec<u8> {
        let mut out = Vec::with_capacity(cts.len() * self.ciphertext_bytes());
        for ct in cts {
            out.extend(self.ct_to_bytes(ct));
        }
        out
    }

    pub fn cts_from_bytes(&self, bytes: &[u8]) -> Result<Vec<Ciphertext>> {
        let w = self.ciphertext_bytes();
        if !bytes.len().is_multiple_of(w) {
            return Err(Error::Ciphertext(format!(
                "payload of {} bytes is not a multiple of {w}",
                bytes.len()
            )));
        }
        bytes.chunks_exact(w).map(|c| self.ct_from_bytes(c)).collect()
    }
}

impl AheKeypair {
    /// Generates a key with a modulus of exactly `modulus_bits` bits.
    pub fn generate<R: Rng + ?Sized>(modulus_bits: u64, rng: &mut R) -> Result<Self> {
        if modulus_bits < 128 || !modulus_bits.is_multiple_of(2) {
            return Err(Error::AheParams(format!(
                "modulus size {modulus_bits} must be even and at least 128"
            )));
        }
        loop {
            let p = random_prime(modulus_bits / 2, rng);
            let q = random_prime(modulus_bits / 2, rng);
            if p == q {
                continue;
            }
            let n = &p * &q;
            if n.bits() != modulus_bits {
                continue;
            }
            return Self::from_primes(p, q);
        }
    }

    pub fn from_primes(p: BigUint, q: BigUint) -> Result<Self> {
        let n = &p * &q;
        let phi = (&p - 1u32) * (&q - 1u32);
        if !n.gcd(&phi).is_one() {
            return Err(Error::AheParams("gcd(n, phi(n)) != 1".into()));
        }
        let pk = AhePublicKey::from_modulus(n)?;
        let p_sq = &p * &p;
        let q_sq = &q * &q;
        // h_p = L_p(g^(p-1) mod p^2)^-1 mod p
        let h = |prime: &BigUint, prime_sq: &BigUint| {
            let g = &pk.n + 1u32;
            let x = g.modpow(&(prime - 1u32), prime_sq);
            let l = (x - 1u32) / prime;
            modinv(&(l % prime), prime)
        };
        let hp = h(&p, &p_sq);
        let hq = h(&q, &q_sq);
        let sk = AheSecretKey {
            n_mod_phi_p: &pk.n % (&p * (&p - 1u32)),
            n_mod_phi_q: &pk.n % (&q * (&q - 1u32)),
            q_inv_p: modinv(&(&q % &p), &p),
            q_sq_inv_p_sq: modinv(&(&q_sq % &p_sq), &p_sq),
            p,
            q,
            p_sq,
            q_sq,
            hp,
            hq,
        };
        Ok(AheKeypair { pk, sk })
    }

    pub fn public(&self) -> &AhePublicKey {
        &self.pk
    }

    /// Encryption using the factorization: `r^n` computed modulo `p^2` and
    /// `q^2` separately.
    pub fn encrypt<R: Rng + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Ciphertext {
        let sk = &self.sk;
        let r = self.pk.random_unit(rng);
        let rp = (&r % &sk.p_sq).modpow(&sk.n_mod_phi_p, &sk.p_sq);
        let rq = (&r % &sk.q_sq).modpow(&sk.n_mod_phi_q, &sk.q_sq);
        // CRT: rn = rq + q^2 * ((rp - rq) * (q^2)^-1 mod p^2)
        let diff = (&rp + &sk.p_sq - (&rq % &sk.p_sq)) % &sk.p_sq;
        let rn = &rq + &sk.q_sq * (diff * &sk.q_sq_inv_p_sq % &sk.p_sq);
        self.pk.wrap(self.pk.encode_plain(m) * rn % &self.pk.n_sq)
    }

    pub fn decrypt(&self, ct: &Ciphertext) -> Result<BigUint> {
        self.pk.check(ct)?;
        let sk = &self.sk;
        let part = |prime: &BigUint, prime_sq: &BigUint, h: &BigUint| {
            let x = (&ct.c % prime_sq).modpow(&(prime - 1u32), prime_sq);
            ((x - 1u32) / prime) * h % prime
        };
        let mp = part(&sk.p, &sk.p_sq, &sk.hp);
        let mq = part(&sk.q, &sk.q_sq, &sk.hq);
        let diff = (&mp + &sk.p - (&mq % &sk.p)) % &sk.p;
        Ok(&mq + &sk.q * (diff * &sk.q_inv_p % &sk.p))
    }
}

/// Key generation at the given modulus size.
pub fn ahe_keygen<R: Rng + ?Sized>(modulus_bits: u64, rng: &mut R) -> Result<AheKeypair> {
    AheKeypair::generate(modulus_bits, rng)
}

pub fn ahe_enc<R: Rng + ?Sized>(pk: &AhePublicKey, m: u64, rng: &mut R) -> Ciphertext {
    pk.encrypt(&BigUint::from(m), rng)
}

pub fn ahe_dec(kp: &AheKeypair, ct: &Ciphertext) -> Result<BigUint> {
    kp.decrypt(ct)
}

pub fn ct_add(pk: &AhePublicKey, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
    pk.add(a, b)
}

pub fn ct_scale(pk: &AhePublicKey, a: &Ciphertext, s: u64) -> Result<Ciphertext> {
    pk.scale(a, &BigUint::from(s))
}

/// Smallest modulus size that keeps a masked sum of `terms` products of
/// `k`-bit values below `n`.
pub fn required_modulus_bits(k: u32, terms: usize) -> u64 {
    let log_terms = (usize::BITS - (2 * terms.max(1)).leading_zeros()) as u64;
    2 * k as u64 + STAT_SECURITY_BITS + log_terms + 2
}
