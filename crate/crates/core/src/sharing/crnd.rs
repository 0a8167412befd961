// SPDX-License-Identifier: Apache-2.0

//! Correlated-randomness files (`.crnd`).
//!
//! A file is one or more sections. Each section is a 30-byte header
//! followed by `count` fixed-width records; all integers little-endian.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CRND"
//!      4     2  version (1)
//!      6     1  party (0 or 1)
//!      7     1  k
//!      8     1  f
//!      9     1  kind: 1 elementwise triple, 2 matmul triple,
//!                     3 binary triple, 4 daBit, 5 truncation pair
//!     10    12  m, n, p (u32 each; matmul dims, zero otherwise)
//!     22     8  count (u64)
//! ```
//!
//! Ring elements take `ceil(k/8)` bytes. Records:
//! elementwise `a b c`; matmul `a[m*n] b[n*p] c[m*p]`; binary one byte with
//! bits `a | b<<1 | c<<2`; daBit `arith` + one byte boolean share;
//! truncation pair `r r_trunc r_msb r_low`.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{DaBitBatch, PartyId, Section, TripleBatch, TripleFlavor, TruncPairBatch};
use crate::error::{Error, Result};
use crate::ring::FixedPointConfig;

pub const CRND_MAGIC: [u8; 4] = *b"CRND";
pub const CRND_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 30;

const KIND_ELEMENTWISE: u8 = 1;
const KIND_MATMUL: u8 = 2;
const KIND_BINARY: u8 = 3;
const KIND_DABIT: u8 = 4;
const KIND_TRUNCPAIR: u8 = 5;

/// `<dir>/<label>.p<party>.crnd`
pub fn party_file(dir: &Path, label: &str, party: PartyId) -> PathBuf {
    dir.join(format!("{label}.p{}.crnd", party.index()))
}

fn consumed_marker(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".consumed");
    PathBuf::from(s)
}

/// Marks a randomness file as used by a session. Fails if some earlier
/// session already claimed it.
pub fn claim_file(path: &Path) -> Result<()> {
    match OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(consumed_marker(path))
    {
        Ok(_) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            Err(Error::RandomnessReused(path.display().to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn is_claimed(path: &Path) -> bool {
    consumed_marker(path).exists()
}

fn put_elem(out: &mut Vec<u8>, v: u64, width: usize) {
    out.extend_from_slice(&v.to_le_bytes()[..width]);
}

fn get_elem(buf: &[u8]) -> u64 {
    let mut b = [0u8; 8];
    b[..buf.len()].copy_from_slice(buf);
    u64::from_le_bytes(b)
}

pub fn encode_section(section: &Section, cfg: &FixedPointConfig) -> Vec<u8> {
    let w = cfg.elem_bytes();
    let (kind, dims) = match section {
        Section::Triples(t) => match t.flavor {
            TripleFlavor::Elementwise => (KIND_ELEMENTWISE, (0, 0, 0)),
            TripleFlavor::Matmul { m, n, p } => (KIND_MATMUL, (m, n, p)),
            TripleFlavor::Binary => (KIND_BINARY, (0, 0, 0)),
        },
        Section::DaBits(_) => (KIND_DABIT, (0, 0, 0)),
        Section::TruncPairs(_) => (KIND_TRUNCPAIR, (0, 0, 0)),
    };
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(&CRND_MAGIC);
    out.extend_from_slice(&CRND_VERSION.to_le_bytes());
    out.push(section.party().index() as u8);
    out.push(cfg.k() as u8);
    out.push(match section {
        Section::TruncPairs(t) => t.frac_bits as u8,
        _ => cfg.f() as u8,
    });
    out.push(kind);
    for d in [dims.0, dims.1, dims.2] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(section.count() as u64).to_le_bytes());
    match section {
        Section::Triples(t) if t.flavor == TripleFlavor::Binary => {
            for i in 0..t.count {
                out.push((t.a[i] | t.b[i] << 1 | t.c[i] << 2) as u8);
            }
        }
        Section::Triples(t) => {
            for i in 0..t.count {
                let (a, b, c) = t.get(i);
                for &v in a.iter().chain(b).chain(c) {
                    put_elem(&mut out, v, w);
                }
            }
        }
        Section::DaBits(d) => {
            for i in 0..d.count {
                put_elem(&mut out, d.arith[i], w);
                out.push(d.boolean[i]);
            }
        }
        Section::TruncPairs(t) => {
            for i in 0..t.count() {
                for v in [t.r[i], t.r_trunc[i], t.r_msb[i], t.r_low[i]] {
                    put_elem(&mut out, v, w);
                }
            }
        }
    }
    out
}

/// Reads every section of a stream. Returns the ring configuration of the
/// sections, which must agree.
pub fn read_sections<R: Read>(mut r: R) -> Result<(FixedPointConfig, PartyId, Vec<Section>)> {
    let bad = |m: String| Error::BadRandomness(m);
    let mut sections = Vec::new();
    let mut meta: Option<(FixedPointConfig, PartyId)> = None;
    loop {
        let mut header = [0u8; HEADER_LEN];
        let mut got = 0;
        while got < HEADER_LEN {
            let n = r.read(&mut header[got..])?;
            if n == 0 {
                break;
            }
            got += n;
        }
        if got == 0 {
            break;
        }
        if got < HEADER_LEN {
            return Err(bad(format!("truncated section header ({got} bytes)")));
        }
        if header[0..4] != CRND_MAGIC {
            return Err(bad(format!("bad magic {:02x?}", &header[0..4])));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != CRND_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let party = PartyId::from_index(header[6] as usize)?;
        let k = header[7] as u32;
        let f = header[8] as u32;
        let kind = header[9];
        let dim = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
        let (m, n, p) = (dim(10), dim(14), dim(18));
        let count = u64::from_le_bytes(header[22..30].try_into().unwrap()) as usize;

        let cfg = match meta {
            None => {
                let cfg = FixedPointConfig::new(k, f).map_err(|e| bad(e.to_string()))?;
                meta = Some((cfg, party));
                cfg
            }
            Some((cfg, p0)) => {
                if cfg.k() != k || p0 != party {
                    return Err(bad("sections disagree on k or party".into()));
                }
                cfg
            }
        };
        let w = cfg.elem_bytes();
        let rec_len = match kind {
            KIND_ELEMENTWISE => 3 * w,
            KIND_MATMUL => (m * n + n * p + m * p) * w,
            KIND_BINARY => 1,
            KIND_DABIT => w + 1,
            KIND_TRUNCPAIR => 4 * w,
            other => return Err(bad(format!("unknown section kind {other}"))),
        };
        let total = rec_len
            .checked_mul(count)
            .ok_or_else(|| bad("section size overflows".into()))?;
        let mut body = vec![0u8; total];
        r.read_exact(&mut body)
            .map_err(|_| bad(format!("truncated section body (expected {total} bytes)")))?;
        let elems = |bytes: &[u8]| bytes.chunks_exact(w).map(get_elem).collect::<Vec<u64>>();
        let section = match kind {
            KIND_ELEMENTWISE | KIND_MATMUL => {
                let flavor = if kind == KIND_MATMUL {
                    TripleFlavor::Matmul { m, n, p }
                } else {
                    TripleFlavor::Elementwise
                };
                let (sa, sb, _) = flavor.sizes();
                let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
                for rec in body.chunks_exact(rec_len) {
                    let v = elems(rec);
                    a.extend_from_slice(&v[..sa]);
                    b.extend_from_slice(&v[sa..sa + sb]);
                    c.extend_from_slice(&v[sa + sb..]);
                }
                Section::Triples(TripleBatch {
                    party,
                    flavor,
                    count,
                    a,
                    b,
                    c,
                })
            }
            KIND_BINARY => Section::Triples(TripleBatch {
                party,
                flavor: TripleFlavor::Binary,
                count,
                a: body.iter().map(|&x| (x & 1) as u64).collect(),
                b: body.iter().map(|&x| (x >> 1 & 1) as u64).collect(),
                c: body.iter().map(|&x| (x >> 2 & 1) as u64).collect(),
            }),
            KIND_DABIT => {
                let mut arith = Vec::with_capacity(count);
                let mut boolean = Vec::with_capacity(count);
                for rec in body.chunks_exact(rec_len) {
                    arith.push(get_elem(&rec[..w]));
                    boolean.push(rec[w] & 1);
                }
                Section::DaBits(DaBitBatch {
                    party,
                    count,
                    arith,
                    boolean,
                })
            }
            _ => {
                let mut t = TruncPairBatch {
                    party,
                    frac_bits: f,
                    r: Vec::with_capacity(count),
                    r_trunc: Vec::with_capacity(count),
                    r_msb: Vec::with_capacity(count),
                    r_low: Vec::with_capacity(count),
                };
                for rec in body.chunks_exact(rec_len) {
                    let v = elems(rec);
                    t.r.push(v[0]);
                    t.r_trunc.push(v[1]);
                    t.r_msb.push(v[2]);
                    t.r_low.push(v[3]);
                }
                Section::TruncPairs(t)
            }
        };
        sections.push(section);
    }
    let (cfg, party) = meta.ok_or_else(|| bad("empty randomness file".into()))?;
    Ok((cfg, party, sections))
}

pub fn write_file(path: &Path, cfg: &FixedPointConfig, sections: &[Section]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in sections {
        w.write_all(&encode_section(s, cfg))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<(FixedPointConfig, PartyId, Vec<Section>)> {
    read_sections(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::dealer::{dealer_generate, DealerRequest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn all_kinds(cfg: &FixedPointConfig) -> (Vec<Section>, Vec<Section>) {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        dealer_generate(
            &[
                DealerRequest::Triples {
                    flavor: TripleFlavor::Elementwise,
                    count: 7,
                },
                DealerRequest::Triples {
                    flavor: TripleFlavor::Matmul { m: 2, n: 3, p: 4 },
                    count: 2,
                },
                DealerRequest::Triples {
                    flavor: TripleFlavor::Binary,
                    count: 9,
                },
                DealerRequest::DaBits { count: 3 },
                DealerRequest::TruncPairs {
                    count: 4,
                    frac_bits: cfg.f(),
                },
            ],
            cfg,
            &mut rng,
        )
    }

    #[test]
    fn file_round_trip() {
        for (k, f) in [(16, 4), (32, 12), (64, 12), (12, 3)] {
            let cfg = FixedPointConfig::new(k, f).unwrap();
            let (p0, _) = all_kinds(&cfg);
            let bytes: Vec<u8> = p0.iter().flat_map(|s| encode_section(s, &cfg)).collect();
            let (cfg2, party, back) = read_sections(&bytes[..]).unwrap();
            assert_eq!(cfg2.k(), k);
            assert_eq!(party, PartyId::P0);
            assert_eq!(back, p0);
        }
    }

    #[test]
    fn header_layout() {
        let cfg = FixedPointConfig::new(64, 12).unwrap();
        let (p0, _) = all_kinds(&cfg);
        let bytes = encode_section(&p0[0], &cfg);
        assert_eq!(&bytes[0..4], b"CRND");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(bytes[6], 0);
        assert_eq!(bytes[7], 64);
        assert_eq!(bytes[8], 12);
        assert_eq!(bytes[9], KIND_ELEMENTWISE);
        assert_eq!(u64::from_le_bytes(bytes[22..30].try_into().unwrap()), 7);
        assert_eq!(bytes.len(), HEADER_LEN + 7 * 3 * 8);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_sections(&b"NOPE"[..]).is_err());
        assert!(read_sections(&[][..]).is_err());
        let cfg = FixedPointConfig::default();
        let (p0, _) = all_kinds(&cfg);
        let bytes = encode_section(&p0[0], &cfg);
        assert!(read_sections(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn claim_is_one_shot() {
        let dir = tempfile::tempdir().unwrap();
        let path = party_file(dir.path(), "s1", PartyId::P1);
        assert!(path.ends_with("s1.p1.crnd"));
        claim_file(&path).unwrap();
        assert!(is_claimed(&path));
        assert!(matches!(claim_file(&path), Err(Error::RandomnessReused(_))));
    }
}
