//! Uniform dispatch over the real scheme and an exact-arithmetic simulator.
//!
//! The simulator keeps slot values as `f64`, tracks level and scale with the
//! same formulas as the real scheme (so both produce identical level
//! ledgers), quantizes to a fixed precision and injects Gaussian noise after
//! every multiplication.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ckks::serial::{self, ByteReader};
use crate::ckks::{
    operand_scale, product_scale, rotation_plan, Ciphertext, CkksContext, CryptoParams,
    KeyBundle, PublicKeys, SecretKey,
};
use crate::error::{Error, Result};

pub const SIM_MAGIC: &[u8; 4] = b"SIM1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    #[serde(rename = "ckks")]
    Ckks,
    #[serde(rename = "noise-sim")]
    NoiseSim,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Ckks => "ckks",
            BackendKind::NoiseSim => "noise-sim",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ckks" => Ok(BackendKind::Ckks),
            "noise-sim" => Ok(BackendKind::NoiseSim),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

/// Per-multiplication noise and fixed-point precision of the simulator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub stddev: f64,
    /// Fractional bits kept after each operation; 52 or more disables quantization.
    pub precision_bits: u32,
}

impl NoiseModel {
    /// Stddev `2^(-scale_log + 4)` and `scale_log` fractional bits.
    pub fn for_params(params: &CryptoParams) -> Self {
        NoiseModel {
            stddev: (4.0 - params.scale_log() as f64).exp2(),
            precision_bits: params.scale_log(),
        }
    }

    /// Exact arithmetic.
    pub fn exact() -> Self {
        NoiseModel { stddev: 0.0, precision_bits: 52 }
    }

    fn quantize(&self, x: f64) -> f64 {
        if self.precision_bits >= 52 {
            x
        } else {
            let s = (self.precision_bits as f64).exp2();
            (x * s).round() / s
        }
    }
}

/// Simulated ciphertext.
#[derive(Clone, Debug, PartialEq)]
pub struct SimCiphertext {
    values: Vec<f64>,
    level: usize,
    scale: f64,
    seed: u64,
}

/// An encrypted vector from either backend.
#[derive(Clone, Debug, PartialEq)]
pub enum HeValue {
    Ckks(Ciphertext),
    Sim(SimCiphertext),
}

impl HeValue {
    pub fn level(&self) -> usize {
        match self {
            HeValue::Ckks(c) => c.level(),
            HeValue::Sim(c) => c.level,
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            HeValue::Ckks(c) => c.scale(),
            HeValue::Sim(c) => c.scale,
        }
    }

    /// Relabels the scale without touching the payload. Only for absorbing
    /// rounding differences between scales that agree to within ~1e-12.
    pub(crate) fn relabel_scale(&mut self, scale: f64) {
        match self {
            HeValue::Ckks(c) => c.scale = scale,
            HeValue::Sim(c) => c.scale = scale,
        }
    }

    pub fn kind(&self) -> BackendKind {
        match self {
            HeValue::Ckks(_) => BackendKind::Ckks,
            HeValue::Sim(_) => BackendKind::NoiseSim,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CkksBackend {
    ctx: Arc<CkksContext>,
    keys: Arc<PublicKeys>,
    secret: Option<Arc<SecretKey>>,
}

#[derive(Clone, Debug)]
pub struct SimBackend {
    params: CryptoParams,
    noise: NoiseModel,
    rotation_steps: BTreeSet<usize>,
    has_secret: bool,
}

impl SimBackend {
    pub fn noise(&self) -> NoiseModel {
        self.noise
    }
}

/// Backend handle. Immutable and cheap to clone; share freely across threads.
#[derive(Clone, Debug)]
pub enum Backend {
    Ckks(CkksBackend),
    NoiseSim(SimBackend),
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn child_seed(a: u64, b: u64, tag: u64) -> u64 {
    mix(mix(a ^ tag.rotate_left(17)) ^ b.rotate_left(29))
}

fn hash_values(values: &[f64]) -> u64 {
    values.iter().fold(0x1234_5678, |h, v| mix(h ^ v.to_bits()))
}

impl Backend {
    /// Real-scheme backend holding a full key bundle (client side).
    pub fn ckks(ctx: Arc<CkksContext>, keys: &KeyBundle) -> Self {
        Backend::Ckks(CkksBackend {
            ctx,
            keys: Arc::new(keys.public().clone()),
            secret: Some(Arc::new(keys.secret().clone())),
        })
    }

    /// Real-scheme backend with evaluation keys only (server side).
    pub fn ckks_public(ctx: Arc<CkksContext>, keys: Arc<PublicKeys>) -> Self {
        Backend::Ckks(CkksBackend { ctx, keys, secret: None })
    }

    pub fn noise_sim(params: CryptoParams, noise: NoiseModel, rotation_steps: &[usize]) -> Self {
        Backend::NoiseSim(SimBackend {
            params,
            noise,
            rotation_steps: rotation_steps.iter().copied().filter(|&s| s != 0).collect(),
            has_secret: true,
        })
    }

    /// The same backend without secret key material.
    pub fn public_view(&self) -> Self {
        match self {
            Backend::Ckks(b) => Backend::Ckks(CkksBackend { secret: None, ..b.clone() }),
            Backend::NoiseSim(b) => Backend::NoiseSim(SimBackend { has_secret: false, ..b.clone() }),
        }
    }

    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Ckks(_) => BackendKind::Ckks,
            Backend::NoiseSim(_) => BackendKind::NoiseSim,
        }
    }

    pub fn params(&self) -> &CryptoParams {
        match self {
            Backend::Ckks(b) => b.ctx.params(),
            Backend::NoiseSim(b) => &b.params,
        }
    }

    pub fn slots(&self) -> usize {
        self.params().slot_count()
    }

    pub fn max_level(&self) -> usize {
        self.params().level_budget()
    }

    pub fn default_scale(&self) -> f64 {
        self.params().scale()
    }

    pub fn has_secret(&self) -> bool {
        match self {
            Backend::Ckks(b) => b.secret.is_some(),
            Backend::NoiseSim(b) => b.has_secret,
        }
    }

    pub fn context(&self) -> Option<&Arc<CkksContext>> {
        match self {
            Backend::Ckks(b) => Some(&b.ctx),
            Backend::NoiseSim(_) => None,
        }
    }

    pub fn public_keys(&self) -> Option<&Arc<PublicKeys>> {
        match self {
            Backend::Ckks(b) => Some(&b.keys),
            Backend::NoiseSim(_) => None,
        }
    }

    pub fn has_rotation(&self, step: usize) -> bool {
        match self {
            Backend::Ckks(b) => b.keys.has_rotation(step),
            Backend::NoiseSim(b) => b.rotation_steps.contains(&step),
        }
    }

    fn mismatch(&self, v: &HeValue) -> Error {
        Error::BackendMismatch { expected: self.kind().name(), found: v.kind().name() }
    }

    fn prime(&self, level: usize) -> u64 {
        self.params().moduli()[level]
    }

    /// Encrypts at the top level and the given (default) scale. With secret
    /// key material the real scheme uses secret-key encryption.
    pub fn encrypt<R: Rng + ?Sized>(
        &self,
        values: &[f64],
        scale: Option<f64>,
        rng: &mut R,
    ) -> Result<HeValue> {
        let scale = scale.unwrap_or_else(|| self.default_scale());
        let slots = self.slots();
        if values.len() > slots {
            return Err(Error::TooManyValues { len: values.len(), capacity: slots });
        }
        match self {
            Backend::Ckks(b) => {
                let ct = match &b.secret {
                    Some(sk) => b.ctx.encrypt_values_sk(values, scale, sk, rng)?,
                    None => b.ctx.encrypt_values_at(values, scale, &b.keys, rng)?,
                };
                Ok(HeValue::Ckks(ct))
            }
            Backend::NoiseSim(b) => {
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(Error::Numerical(format!("invalid encoding scale {scale}")));
                }
                let mut v = vec![0.0; slots];
                for (d, &x) in v.iter_mut().zip(values) {
                    *d = b.noise.quantize(x);
                }
                Ok(HeValue::Sim(SimCiphertext {
                    values: v,
                    level: self.max_level(),
                    scale,
                    seed: rng.random(),
                }))
            }
        }
    }

    pub fn decrypt(&self, v: &HeValue) -> Result<Vec<f64>> {
        match (self, v) {
            (Backend::Ckks(b), HeValue::Ckks(c)) => {
                let sk = b.secret.as_ref().ok_or(Error::MissingSecretKey)?;
                Ok(b.ctx.decrypt_values(c, sk))
            }
            (Backend::NoiseSim(b), HeValue::Sim(c)) => {
                if !b.has_secret {
                    return Err(Error::MissingSecretKey);
                }
                Ok(c.values.clone())
            }
            _ => Err(self.mismatch(v)),
        }
    }

    fn check_same(a: &SimCiphertext, b: &SimCiphertext) -> Result<()> {
        if a.level != b.level {
            return Err(Error::LevelMismatch { left: a.level, right: b.level });
        }
        if a.scale != b.scale {
            return Err(Error::ScaleMismatch { left: a.scale, right: b.scale });
        }
        Ok(())
    }

    fn sim_linear(
        &self,
        a: &HeValue,
        b: &HeValue,
        tag: u64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<HeValue> {
        match (a, b) {
            (HeValue::Sim(x), HeValue::Sim(y)) => {
                Self::check_same(x, y)?;
                let values = x.values.iter().zip(&y.values).map(|(&u, &v)| f(u, v)).collect();
                Ok(HeValue::Sim(SimCiphertext {
                    values,
                    level: x.level,
                    scale: x.scale,
                    seed: child_seed(x.seed, y.seed, tag),
                }))
            }
            (HeValue::Sim(_), other) | (other, _) => Err(self.mismatch(other)),
        }
    }

    pub fn add(&self, a: &HeValue, b: &HeValue) -> Result<HeValue> {
        match (self, a, b) {
            (Backend::Ckks(k), HeValue::Ckks(x), HeValue::Ckks(y)) => Ok(HeValue::Ckks(k.ctx.add(x, y)?)),
            (Backend::NoiseSim(_), _, _) => self.sim_linear(a, b, 1, |u, v| u + v),
            _ => Err(self.mismatch(if a.kind() != self.kind() { a } else { b })),
        }
    }

    pub fn sub(&self, a: &HeValue, b: &HeValue) -> Result<HeValue> {
        match (self, a, b) {
            (Backend::Ckks(k), HeValue::Ckks(x), HeValue::Ckks(y)) => Ok(HeValue::Ckks(k.ctx.sub(x, y)?)),
            (Backend::NoiseSim(_), _, _) => self.sim_linear(a, b, 2, |u, v| u - v),
            _ => Err(self.mismatch(if a.kind() != self.kind() { a } else { b })),
        }
    }

    pub fn add_scalar(&self, a: &HeValue, c: f64) -> Result<HeValue> {
        match (self, a) {
            (Backend::Ckks(k), HeValue::Ckks(x)) => Ok(HeValue::Ckks(k.ctx.add_scalar(x, c)?)),
            (Backend::NoiseSim(b), HeValue::Sim(x)) => {
                let values = x.values.iter().map(|&u| b.noise.quantize(u + c)).collect();
                Ok(HeValue::Sim(SimCiphertext {
                    values,
                    seed: child_seed(x.seed, c.to_bits(), 3),
                    ..x.clone()
                }))
            }
            _ => Err(self.mismatch(a)),
        }
    }

    pub fn add_plain(&self, a: &HeValue, p: &[f64]) -> Result<HeValue> {
        if p.len() > self.slots() {
            return Err(Error::TooManyValues { len: p.len(), capacity: self.slots() });
        }
        match (self, a) {
            (Backend::Ckks(k), HeValue::Ckks(x)) => Ok(HeValue::Ckks(k.ctx.add_plain(x, p)?)),
            (Backend::NoiseSim(b), HeValue::Sim(x)) => {
                let mut values = x.values.clone();
                for (u, &v) in values.iter_mut().zip(p) {
                    *u = b.noise.quantize(*u + v);
                }
                Ok(HeValue::Sim(SimCiphertext {
                    values,
                    seed: child_seed(x.seed, hash_values(p), 4),
                    ..x.clone()
                }))
            }
            _ => Err(self.mismatch(a)),
        }
    }

    fn sim_product(
        &self,
        b: &SimBackend,
        values: Vec<f64>,
        level: usize,
        scale: f64,
        seed: u64,
    ) -> HeValue {
        let mut values: Vec<f64> = values.into_iter().map(|v| b.noise.quantize(v)).collect();
        if b.noise.stddev > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, b.noise.stddev).expect("finite stddev");
            for v in values.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        HeValue::Sim(SimCiphertext { values, level, scale, seed })
    }

    fn require_level(level: usize) -> Result<()> {
        if level == 0 {
            return Err(Error::LevelExhausted { needed: 1, available: 0 });
        }
        Ok(())
    }

    fn check_scale(s: Option<f64>) -> Result<()> {
        match s {
            Some(s) if !(s.is_finite() && s > 0.0) => {
                Err(Error::Numerical(format!("invalid target scale {s}")))
            }
            _ => Ok(()),
        }
    }

    /// Slotwise product with a plaintext vector; consumes one level.
    pub fn mul_plain(&self, a: &HeValue, p: &[f64], out_scale: Option<f64>) -> Result<HeValue> {
        if p.len() > self.slots() {
            return Err(Error::TooManyValues { len: p.len(), capacity: self.slots() });
        }
        Self::check_scale(out_scale)?;
        match (self, a) {
            (Backend::Ckks(k), HeValue::Ckks(x)) => Ok(HeValue::Ckks(k.ctx.mul_plain(x, p, out_scale)?)),
            (Backend::NoiseSim(b), HeValue::Sim(x)) => {
                Self::require_level(x.level)?;
                self.sim_check_operand_scale(x, out_scale)?;
                let mut values = vec![0.0; x.values.len()];
                for ((d, &u), &v) in values.iter_mut().zip(&x.values).zip(p) {
                    *d = u * v;
                }
                let seed = child_seed(x.seed, hash_values(p), 5);
                Ok(self.sim_product(b, values, x.level - 1, out_scale.unwrap_or(x.scale), seed))
            }
            _ => Err(self.mismatch(a)),
        }
    }

    /// Multiplies every slot by `s`; consumes one level.
    pub fn mul_scalar(&self, a: &HeValue, s: f64, out_scale: Option<f64>) -> Result<HeValue> {
        Self::check_scale(out_scale)?;
        match (self, a) {
            (Backend::Ckks(k), HeValue::Ckks(x)) => Ok(HeValue::Ckks(k.ctx.mul_scalar(x, s, out_scale)?)),
            (Backend::NoiseSim(b), HeValue::Sim(x)) => {
                Self::require_level(x.level)?;
                self.sim_check_operand_scale(x, out_scale)?;
                let values = x.values.iter().map(|&u| u * s).collect();
                let seed = child_seed(x.seed, s.to_bits(), 6);
                Ok(self.sim_product(b, values, x.level - 1, out_scale.unwrap_or(x.scale), seed))
            }
            _ => Err(self.mismatch(a)),
        }
    }

    /// The real scheme fails when the operand encoding scale is unusable;
    /// mirror that check so both ledgers reject the same requests.
    fn sim_check_operand_scale(&self, x: &SimCiphertext, out_scale: Option<f64>) -> Result<()> {
        let s = operand_scale(x.scale, out_scale.unwrap_or(x.scale), self.prime(x.level));
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Numerical(format!("invalid encoding scale {s}")));
        }
        Ok(())
    }

    /// Slotwise product of two ciphertexts at equal level; consumes one level.
    pub fn mul_ct(&self, a: &HeValue, b: &HeValue) -> Result<HeValue> {
        match (self, a, b) {
            (Backend::Ckks(k), HeValue::Ckks(x), HeValue::Ckks(y)) => {
                Ok(HeValue::Ckks(k.ctx.mul_ct(x, y, &k.keys)?))
            }
            (Backend::NoiseSim(s), HeValue::Sim(x), HeValue::Sim(y)) => {
                if x.level != y.level {
                    return Err(Error::LevelMismatch { left: x.level, right: y.level });
                }
                Self::require_level(x.level)?;
                let values = x.values.iter().zip(&y.values).map(|(&u, &v)| u * v).collect();
                let scale = product_scale(x.scale, y.scale, self.prime(x.level));
                let seed = child_seed(x.seed, y.seed, 7);
                Ok(self.sim_product(s, values, x.level - 1, scale, seed))
            }
            _ => Err(self.mismatch(if a.kind() != self.kind() { a } else { b })),
        }
    }

    /// Left rotation by `step`. Returns the result and the number of
    /// key-switched rotations performed.
    pub fn rotate(&self, a: &HeValue, step: usize) -> Result<(HeValue, usize)> {
        match (self, a) {
            (Backend::Ckks(k), HeValue::Ckks(x)) => {
                let (c, n) = k.ctx.rotate(x, step, &k.keys)?;
                Ok((HeValue::Ckks(c), n))
            }
            (Backend::NoiseSim(b), HeValue::Sim(x)) => {
                let slots = x.values.len();
                let plan = rotation_plan(step, slots, |s| b.rotation_steps.contains(&s))?;
                let r = step % slots;
                let values = (0..slots).map(|i| x.values[(i + r) % slots]).collect();
                Ok((
                    HeValue::Sim(SimCiphertext {
                        values,
                        seed: child_seed(x.seed, r as u64, 8),
                        ..x.clone()
                    }),
                    plan.len(),
                ))
            }
            _ => Err(self.mismatch(a)),
        }
    }

    pub fn level_drop(&self, a: &HeValue, target: usize) -> Result<HeValue> {
        match (self, a) {
            (Backend::Ckks(k), HeValue::Ckks(x)) => Ok(HeValue::Ckks(k.ctx.level_drop(x, target)?)),
            (Backend::NoiseSim(_), HeValue::Sim(x)) => {
                if target > x.level {
                    return Err(Error::LevelRaise { current: x.level, target });
                }
                Ok(HeValue::Sim(SimCiphertext { level: target, ..x.clone() }))
            }
            _ => Err(self.mismatch(a)),
        }
    }

    /// Encoded size of a value at `level`.
    pub fn serialized_size(&self, level: usize) -> usize {
        match self {
            Backend::Ckks(_) => serial::ciphertext_size(self.params().ring_size_log(), level),
            Backend::NoiseSim(_) => 4 + 1 + 4 + 8 + 8 + 8 * self.slots(),
        }
    }

    /// Real scheme: the `CKK1` ciphertext encoding. Simulator: magic `SIM1`,
    /// level u8, slot count u32, seed u64, scale f64, then the slot values
    /// as f64, all little-endian.
    pub fn serialize(&self, v: &HeValue) -> Result<Vec<u8>> {
        match (self, v) {
            (Backend::Ckks(k), HeValue::Ckks(c)) => Ok(serial::serialize_ciphertext(&k.ctx, c)),
            (Backend::NoiseSim(_), HeValue::Sim(c)) => {
                let mut out = Vec::with_capacity(self.serialized_size(c.level));
                out.extend_from_slice(SIM_MAGIC);
                out.push(c.level as u8);
                out.extend_from_slice(&(c.values.len() as u32).to_le_bytes());
                out.extend_from_slice(&c.seed.to_le_bytes());
                out.extend_from_slice(&c.scale.to_le_bytes());
                for x in &c.values {
                    out.extend_from_slice(&x.to_le_bytes());
                }
                Ok(out)
            }
            _ => Err(self.mismatch(v)),
        }
    }

    pub fn read_value(&self, r: &mut ByteReader<'_>) -> Result<HeValue> {
        match self {
            Backend::Ckks(k) => Ok(HeValue::Ckks(serial::read_ciphertext(r, &k.ctx)?)),
            Backend::NoiseSim(_) => {
                r.expect_magic(SIM_MAGIC)?;
                let level = r.u8()? as usize;
                if level > self.max_level() {
                    return Err(r.error(format!("level {level} above budget {}", self.max_level())));
                }
                let count = r.u32()? as usize;
                if count != self.slots() {
                    return Err(r.error(format!("slot count {count} != {}", self.slots())));
                }
                let seed = r.u64()?;
                let scale = r.f64()?;
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(r.error("scale must be positive and finite"));
                }
                let mut values = Vec::with_capacity(count);
                for _ in 0..count {
                    values.push(r.f64()?);
                }
                Ok(HeValue::Sim(SimCiphertext { values, level, scale, seed }))
            }
        }
    }

    pub fn deserialize(&self, bytes: &[u8]) -> Result<HeValue> {
        let mut r = ByteReader::new(bytes);
        let v = self.read_value(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}
