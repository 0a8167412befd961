// SPDX-License-Identifier: Apache-2.0

//! Fixed-point encoding into `Z_{2^k}` and exact ring arithmetic.
//!
//! Ring elements are stored in a `u64` and always kept reduced modulo `2^k`.
//! All arithmetic wraps; the signed view is two's complement on `k` bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ring width and fixed-point scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub bitwidth_k: u32,
    pub frac_bits_f: u32,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            bitwidth_k: 64,
            frac_bits_f: 12,
        }
    }
}

impl FixedPointConfig {
    pub fn new(bitwidth_k: u32, frac_bits_f: u32) -> Result<Self> {
        if !(8..=64).contains(&bitwidth_k) {
            return Err(Error::InvalidConfig(format!(
                "bitwidth k={bitwidth_k} outside 8..=64"
            )));
        }
        if frac_bits_f == 0 || frac_bits_f + 4 > bitwidth_k {
            return Err(Error::InvalidConfig(format!(
                "fractional bits f={frac_bits_f} must satisfy 0 < f <= k-4 (k={bitwidth_k})"
            )));
        }
        Ok(FixedPointConfig {
            bitwidth_k,
            frac_bits_f,
        })
    }

    #[inline]
    pub fn k(&self) -> u32 {
        self.bitwidth_k
    }

    #[inline]
    pub fn f(&self) -> u32 {
        self.frac_bits_f
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        if self.bitwidth_k == 64 {
            u64::MAX
        } else {
            (1u64 << self.bitwidth_k) - 1
        }
    }

    /// Bytes needed for one ring element on the wire / in files.
    #[inline]
    pub fn elem_bytes(&self) -> usize {
        self.bitwidth_k.div_ceil(8) as usize
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        x & self.mask()
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        a.wrapping_add(b) & self.mask()
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        a.wrapping_sub(b) & self.mask()
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        a.wrapping_mul(b) & self.mask()
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        0u64.wrapping_sub(a) & self.mask()
    }

    /// Two's-complement view of a reduced element.
    #[inline]
    pub fn signed(&self, x: u64) -> i64 {
        let shift = 64 - self.bitwidth_k;
        ((x << shift) as i64) >> shift
    }

    #[inline]
    pub fn from_signed(&self, v: i64) -> u64 {
        (v as u64) & self.mask()
    }

    #[inline]
    pub fn msb(&self, x: u64) -> u64 {
        (x >> (self.bitwidth_k - 1)) & 1
    }

    /// Encode a real as `round(real * 2^f) mod 2^k`, rounding half away
    /// from zero.
    pub fn encode(&self, real: f64) -> Result<u64> {
        self.encode_scaled(real, self.frac_bits_f)
    }

    /// Encode with an explicit number of fractional bits.
    pub fn encode_scaled(&self, real: f64, frac_bits: u32) -> Result<u64> {
        let overflow = || Error::Overflow {
            value: real,
            k: self.bitwidth_k,
            f: frac_bits,
        };
        if !real.is_finite() || frac_bits >= self.bitwidth_k {
            return Err(overflow());
        }
        let limit = 2f64.powi((self.bitwidth_k - frac_bits - 1) as i32);
        if real.abs() >= limit {
            return Err(overflow());
        }
        let scaled = (real * 2f64.powi(frac_bits as i32)).round();
        let half = 2f64.powi(self.bitwidth_k as i32 - 1);
        if scaled >= half || scaled < -half {
            return Err(overflow());
        }
        Ok(self.from_signed(scaled as i64))
    }

    pub fn decode(&self, x: u64) -> f64 {
        self.signed(x) as f64 / 2f64.powi(self.frac_bits_f as i32)
    }

    /// Floor division of the signed interpretation by `2^bits`.
    #[inline]
    pub fn trunc_floor(&self, x: u64, bits: u32) -> u64 {
        self.from_signed(self.signed(x) >> bits)
    }

    pub fn encode_all(&self, reals: &[f64]) -> Result<Vec<u64>> {
        reals.iter().map(|&r| self.encode(r)).collect()
    }

    pub fn decode_all(&self, xs: &[u64]) -> Vec<f64> {
        xs.iter().map(|&x| self.decode(x)).collect()
    }
}

/// One element of `Z_{2^k}`. Mostly useful at API boundaries; bulk data
/// lives in [`PlainTensor`] as raw reduced `u64`s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RingElement(pub u64);

impl RingElement {
    pub fn new(value: u64, cfg: &FixedPointConfig) -> Self {
        RingElement(cfg.reduce(value))
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

pub fn fx_encode(real: f64, cfg: &FixedPointConfig) -> Result<RingElement> {
    cfg.encode(real).map(RingElement)
}

pub fn fx_decode(elem: RingElement, cfg: &FixedPointConfig) -> f64 {
    cfg.decode(elem.0)
}

pub fn ring_add(a: RingElement, b: RingElement, cfg: &FixedPointConfig) -> RingElement {
    RingElement(cfg.add(a.0, b.0))
}

pub fn ring_mul(a: RingElement, b: RingElement, cfg: &FixedPointConfig) -> RingElement {
    RingElement(cfg.mul(a.0, b.0))
}

pub fn trunc_floor(x: RingElement, bits: u32, cfg: &FixedPointConfig) -> RingElement {
    RingElement(cfg.trunc_floor(x.0, bits))
}

/// Row-major tensor of ring elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainTensor {
    pub shape: Vec<usize>,
    pub data: Vec<u64>,
}

impl PlainTensor {
    pub fn new(shape: Vec<usize>, data: Vec<u64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(PlainTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        PlainTensor {
            shape,
            data: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn encode(shape: Vec<usize>, reals: &[f64], cfg: &FixedPointConfig) -> Result<Self> {
        PlainTensor::new(shape, cfg.encode_all(reals)?)
    }

    pub fn decode(&self, cfg: &FixedPointConfig) -> Vec<f64> {
        cfg.decode_all(&self.data)
    }
}
