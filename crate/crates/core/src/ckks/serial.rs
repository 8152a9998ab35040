//! Little-endian binary encodings for ciphertexts and public key material.

use std::collections::BTreeMap;

use super::ciphertext::Ciphertext;
use super::context::{CkksContext, RnsPoly};
use super::keys::{PublicKey, PublicKeys, SwitchKey};
use crate::error::{Error, Result};

pub const CIPHERTEXT_MAGIC: &[u8; 4] = b"CKK1";
pub const PUBLIC_KEYS_MAGIC: &[u8; 4] = b"CKPK";

/// Sequential reader that reports the byte offset of any failure.
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn error(&self, reason: impl Into<String>) -> Error {
        Error::Parse { offset: self.pos, reason: reason.into() }
    }

    pub fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(self.error(format!(
                "need {len} bytes, {} remaining",
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        if self.take(4)? != magic {
            return Err(Error::Parse {
                offset: at,
                reason: format!("bad magic, expected {:?}", String::from_utf8_lossy(magic)),
            });
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.error(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

fn put_poly(out: &mut Vec<u8>, poly: &RnsPoly) {
    for limb in &poly.limbs {
        for w in limb {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
}

fn get_poly(
    r: &mut ByteReader<'_>,
    ctx: &CkksContext,
    primes: &[usize],
) -> Result<RnsPoly> {
    let n = ctx.n();
    let mut limbs = Vec::with_capacity(primes.len());
    for &idx in primes {
        let q = ctx.prime(idx);
        let bytes = r.take(8 * n)?;
        let mut limb = Vec::with_capacity(n);
        for (k, chunk) in bytes.chunks_exact(8).enumerate() {
            let w = u64::from_le_bytes(chunk.try_into().unwrap());
            if w >= q {
                return Err(Error::Parse {
                    offset: r.offset() - 8 * n + 8 * k,
                    reason: format!("residue {w} not reduced modulo {q}"),
                });
            }
            limb.push(w);
        }
        limbs.push(limb);
    }
    Ok(RnsPoly { limbs })
}

/// Exact encoded length of a ciphertext at `level`.
pub fn ciphertext_size(ring_size_log: u32, level: usize) -> usize {
    8 + 8 + 2 * (level + 1) * (1usize << ring_size_log) * 8
}

/// Header: magic `CKK1`, ring_size_log u8, level u8, scale_log u8, poly
/// count u8 (always 2), exact scale as f64; then every residue of `c0`
/// followed by every residue of `c1`, primes in chain order, as u64.
pub fn serialize_ciphertext(ctx: &CkksContext, ct: &Ciphertext) -> Vec<u8> {
    let p = ctx.params();
    let mut out = Vec::with_capacity(ciphertext_size(p.ring_size_log(), ct.level));
    out.extend_from_slice(CIPHERTEXT_MAGIC);
    out.push(p.ring_size_log() as u8);
    out.push(ct.level as u8);
    out.push(p.scale_log() as u8);
    out.push(2);
    out.extend_from_slice(&ct.scale.to_le_bytes());
    put_poly(&mut out, &ct.c0);
    put_poly(&mut out, &ct.c1);
    out
}

pub fn read_ciphertext(r: &mut ByteReader<'_>, ctx: &CkksContext) -> Result<Ciphertext> {
    let p = ctx.params();
    r.expect_magic(CIPHERTEXT_MAGIC)?;
    let log_n = r.u8()?;
    if log_n as u32 != p.ring_size_log() {
        return Err(r.error(format!("ring size log {log_n} does not match {}", p.ring_size_log())));
    }
    let level = r.u8()? as usize;
    if level > ctx.max_level() {
        return Err(r.error(format!("level {level} above budget {}", ctx.max_level())));
    }
    let scale_log = r.u8()?;
    if scale_log as u32 != p.scale_log() {
        return Err(r.error(format!("scale log {scale_log} does not match {}", p.scale_log())));
    }
    let count = r.u8()?;
    if count != 2 {
        return Err(r.error(format!("expected 2 polynomials, found {count}")));
    }
    let scale = r.f64()?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(r.error("scale must be positive and finite"));
    }
    let primes: Vec<usize> = (0..=level).collect();
    let c0 = get_poly(r, ctx, &primes)?;
    let c1 = get_poly(r, ctx, &primes)?;
    Ok(Ciphertext { c0, c1, level, scale })
}

pub fn deserialize_ciphertext(ctx: &CkksContext, bytes: &[u8]) -> Result<Ciphertext> {
    let mut r = ByteReader::new(bytes);
    let ct = read_ciphertext(&mut r, ctx)?;
    r.finish()?;
    Ok(ct)
}

fn put_switch_key(out: &mut Vec<u8>, key: &SwitchKey) {
    for (b, a) in &key.digits {
        put_poly(out, b);
        put_poly(out, a);
    }
}

fn get_switch_key(r: &mut ByteReader<'_>, ctx: &CkksContext) -> Result<SwitchKey> {
    let all: Vec<usize> = (0..=ctx.special_index()).collect();
    let mut digits = Vec::with_capacity(ctx.max_level() + 1);
    for _ in 0..=ctx.max_level() {
        let b = get_poly(r, ctx, &all)?;
        let a = get_poly(r, ctx, &all)?;
        digits.push((b, a));
    }
    Ok(SwitchKey { digits })
}

/// Magic `CKPK`, ring_size_log u8, level budget u8, 32-byte parameter
/// digest, public key, relinearization key, u32 rotation-key count and
/// `(u32 step, key)` pairs in ascending step order.
pub fn serialize_public_keys(ctx: &CkksContext, keys: &PublicKeys) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PUBLIC_KEYS_MAGIC);
    out.push(ctx.params().ring_size_log() as u8);
    out.push(ctx.max_level() as u8);
    out.extend_from_slice(&keys.params_digest);
    put_poly(&mut out, &keys.public.b);
    put_poly(&mut out, &keys.public.a);
    put_switch_key(&mut out, &keys.relin);
    out.extend_from_slice(&(keys.rotations.len() as u32).to_le_bytes());
    for (&step, key) in &keys.rotations {
        out.extend_from_slice(&(step as u32).to_le_bytes());
        put_switch_key(&mut out, key);
    }
    out
}

pub fn deserialize_public_keys(ctx: &CkksContext, bytes: &[u8]) -> Result<PublicKeys> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(PUBLIC_KEYS_MAGIC)?;
    let log_n = r.u8()? as u32;
    let levels = r.u8()? as usize;
    if log_n != ctx.params().ring_size_log() || levels != ctx.max_level() {
        return Err(Error::KeyMismatch);
    }
    let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
    if digest != ctx.params().digest() {
        return Err(Error::KeyMismatch);
    }
    let chain: Vec<usize> = (0..=ctx.max_level()).collect();
    let b = get_poly(&mut r, ctx, &chain)?;
    let a = get_poly(&mut r, ctx, &chain)?;
    let relin = get_switch_key(&mut r, ctx)?;
    let count = r.u32()? as usize;
    let mut rotations = BTreeMap::new();
    for _ in 0..count {
        let step = r.u32()? as usize;
        if step == 0 || step >= ctx.slots() {
            return Err(r.error(format!("rotation step {step} out of range")));
        }
        rotations.insert(step, get_switch_key(&mut r, ctx)?);
    }
    r.finish()?;
    Ok(PublicKeys { params_digest: digest, public: PublicKey { b, a }, relin, rotations })
}
