//! Encryption and homomorphic evaluation.

use rand::Rng;

use super::context::{CkksContext, RnsPoly};
use super::keys::{rotation_plan, PublicKeys, SecretKey, SwitchKey};
use crate::error::{Error, Result};

/// Encoded slot vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Plaintext {
    pub(crate) poly: RnsPoly,
    pub scale: f64,
    pub level: usize,
}

/// RLWE ciphertext `(c0, c1)` with `c0 + c1*s ~ Delta * m`, NTT form over `q_0..q_level`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    pub(crate) c0: RnsPoly,
    pub(crate) c1: RnsPoly,
    pub(crate) level: usize,
    pub(crate) scale: f64,
}

impl Ciphertext {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Scale of a rescaled ciphertext-ciphertext product at a level with top prime `q`.
pub fn product_scale(a: f64, b: f64, q: u64) -> f64 {
    a * b / q as f64
}

/// Encoding scale of a multiplicand that makes the rescaled product land on `target`.
pub fn operand_scale(ct_scale: f64, target: f64, q: u64) -> f64 {
    target * q as f64 / ct_scale
}

fn level_primes(level: usize) -> Vec<usize> {
    (0..=level).collect()
}

impl CkksContext {
    fn check_keys(&self, keys: &PublicKeys) -> Result<()> {
        if keys.params_digest != self.params().digest() {
            return Err(Error::KeyMismatch);
        }
        Ok(())
    }

    pub fn encode_plain(&self, values: &[f64], scale: f64, level: usize) -> Result<Plaintext> {
        if level > self.max_level() {
            return Err(Error::LevelRaise { current: self.max_level(), target: level });
        }
        Ok(Plaintext { poly: self.encode(values, scale, level)?, scale, level })
    }

    pub fn decode_plain(&self, pt: &Plaintext) -> Vec<f64> {
        self.decode(&pt.poly, pt.scale)
    }

    pub fn encrypt<R: Rng + ?Sized>(
        &self,
        pt: &Plaintext,
        keys: &PublicKeys,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        self.check_keys(keys)?;
        let primes = level_primes(pt.level);
        let u = self.from_signed(&self.sample_ternary(rng), &primes);
        let e0 = self.from_signed(&self.sample_gaussian(rng), &primes);
        let e1 = self.from_signed(&self.sample_gaussian(rng), &primes);
        let mut b = keys.public.b.clone();
        let mut a = keys.public.a.clone();
        b.truncate(pt.level + 1);
        a.truncate(pt.level + 1);
        let mut c0 = self.mul(&b, &u, &primes);
        self.add_assign(&mut c0, &e0, &primes);
        self.add_assign(&mut c0, &pt.poly, &primes);
        let mut c1 = self.mul(&a, &u, &primes);
        self.add_assign(&mut c1, &e1, &primes);
        Ok(Ciphertext { c0, c1, level: pt.level, scale: pt.scale })
    }

    /// Secret-key encryption `(-a*s + e + m, a)`. Its noise is a single
    /// Gaussian term, far below that of public-key encryption.
    pub fn encrypt_symmetric<R: Rng + ?Sized>(
        &self,
        pt: &Plaintext,
        sk: &SecretKey,
        rng: &mut R,
    ) -> Ciphertext {
        let primes = level_primes(pt.level);
        let a = self.sample_uniform(rng, &primes);
        let e = self.from_signed(&self.sample_gaussian(rng), &primes);
        let s = RnsPoly { limbs: sk.ntt.limbs[..=pt.level].to_vec() };
        let mut c0 = self.mul(&a, &s, &primes);
        self.neg_assign(&mut c0, &primes);
        self.add_assign(&mut c0, &e, &primes);
        self.add_assign(&mut c0, &pt.poly, &primes);
        Ciphertext { c0, c1: a, level: pt.level, scale: pt.scale }
    }

    /// Secret-key encryption at the top level and the given scale.
    pub fn encrypt_values_sk<R: Rng + ?Sized>(
        &self,
        values: &[f64],
        scale: f64,
        sk: &SecretKey,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        let pt = self.encode_plain(values, scale, self.max_level())?;
        Ok(self.encrypt_symmetric(&pt, sk, rng))
    }

    /// Encodes at the default scale and top level, then encrypts.
    pub fn encrypt_values<R: Rng + ?Sized>(
        &self,
        values: &[f64],
        keys: &PublicKeys,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        self.encrypt_values_at(values, self.params().scale(), keys, rng)
    }

    pub fn encrypt_values_at<R: Rng + ?Sized>(
        &self,
        values: &[f64],
        scale: f64,
        keys: &PublicKeys,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        let pt = self.encode_plain(values, scale, self.max_level())?;
        self.encrypt(&pt, keys, rng)
    }

    pub fn decrypt(&self, ct: &Ciphertext, sk: &SecretKey) -> Plaintext {
        let primes = level_primes(ct.level);
        let s = RnsPoly { limbs: sk.ntt.limbs[..=ct.level].to_vec() };
        let mut m = self.mul(&ct.c1, &s, &primes);
        self.add_assign(&mut m, &ct.c0, &primes);
        Plaintext { poly: m, scale: ct.scale, level: ct.level }
    }

    pub fn decrypt_values(&self, ct: &Ciphertext, sk: &SecretKey) -> Vec<f64> {
        self.decode_plain(&self.decrypt(ct, sk))
    }

    fn check_same(&self, a: &Ciphertext, b: &Ciphertext) -> Result<()> {
        if a.level != b.level {
            return Err(Error::LevelMismatch { left: a.level, right: b.level });
        }
        if a.scale != b.scale {
            return Err(Error::ScaleMismatch { left: a.scale, right: b.scale });
        }
        Ok(())
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_same(a, b)?;
        let primes = level_primes(a.level);
        let mut out = a.clone();
        self.add_assign(&mut out.c0, &b.c0, &primes);
        self.add_assign(&mut out.c1, &b.c1, &primes);
        Ok(out)
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_same(a, b)?;
        let primes = level_primes(a.level);
        let mut out = a.clone();
        self.sub_assign(&mut out.c0, &b.c0, &primes);
        self.sub_assign(&mut out.c1, &b.c1, &primes);
        Ok(out)
    }

    /// Adds `c` to every slot without consuming a level.
    pub fn add_scalar(&self, a: &Ciphertext, c: f64) -> Result<Ciphertext> {
        let consts = self.encode_constant(c, a.scale, a.level)?;
        let mut out = a.clone();
        for ((limb, &k), i) in out.c0.limbs.iter_mut().zip(&consts).zip(0..) {
            let m = self.modulus(i);
            for u in limb.iter_mut() {
                *u = m.add(*u, k);
            }
        }
        Ok(out)
    }

    /// Adds a plaintext vector encoded at the ciphertext's own scale.
    pub fn add_plain(&self, a: &Ciphertext, values: &[f64]) -> Result<Ciphertext> {
        let pt = self.encode(values, a.scale, a.level)?;
        let mut out = a.clone();
        self.add_assign(&mut out.c0, &pt, &level_primes(a.level));
        Ok(out)
    }

    fn require_level(&self, a: &Ciphertext) -> Result<()> {
        if a.level == 0 {
            return Err(Error::LevelExhausted { needed: 1, available: 0 });
        }
        Ok(())
    }

    /// Scale at which a multiplicand must be encoded so that the rescaled
    /// product lands exactly on `target`.
    fn operand_scale(&self, a: &Ciphertext, target: Option<f64>) -> f64 {
        operand_scale(a.scale, target.unwrap_or(a.scale), self.prime(a.level))
    }

    /// Slotwise product with a plaintext vector, followed by a rescale.
    ///
    /// The result has scale `out_scale` when given, otherwise the input scale.
    pub fn mul_plain(
        &self,
        a: &Ciphertext,
        values: &[f64],
        out_scale: Option<f64>,
    ) -> Result<Ciphertext> {
        self.require_level(a)?;
        let primes = level_primes(a.level);
        let pt_scale = self.operand_scale(a, out_scale);
        let pt = self.encode(values, pt_scale, a.level)?;
        let mut c0 = self.mul(&a.c0, &pt, &primes);
        let mut c1 = self.mul(&a.c1, &pt, &primes);
        self.rescale(&mut c0);
        self.rescale(&mut c1);
        let scale = out_scale.unwrap_or(a.scale);
        Ok(Ciphertext { c0, c1, level: a.level - 1, scale })
    }

    /// Multiplies every slot by `s`, followed by a rescale.
    pub fn mul_scalar(&self, a: &Ciphertext, s: f64, out_scale: Option<f64>) -> Result<Ciphertext> {
        self.require_level(a)?;
        let primes = level_primes(a.level);
        let k_scale = self.operand_scale(a, out_scale);
        let consts = self.encode_constant(s, k_scale, a.level)?;
        let mut c0 = a.c0.clone();
        let mut c1 = a.c1.clone();
        self.mul_const_assign(&mut c0, &consts, &primes);
        self.mul_const_assign(&mut c1, &consts, &primes);
        self.rescale(&mut c0);
        self.rescale(&mut c1);
        let scale = out_scale.unwrap_or(a.scale);
        Ok(Ciphertext { c0, c1, level: a.level - 1, scale })
    }

    /// Slotwise product of two ciphertexts at the same level, relinearized
    /// and rescaled. The output scale is `scale_a * scale_b / q_level`.
    pub fn mul_ct(&self, a: &Ciphertext, b: &Ciphertext, keys: &PublicKeys) -> Result<Ciphertext> {
        self.check_keys(keys)?;
        if a.level != b.level {
            return Err(Error::LevelMismatch { left: a.level, right: b.level });
        }
        self.require_level(a)?;
        let primes = level_primes(a.level);
        let mut d0 = self.mul(&a.c0, &b.c0, &primes);
        let mut d1 = self.mul(&a.c0, &b.c1, &primes);
        self.mul_acc(&mut d1, &a.c1, &b.c0, &primes);
        let d2 = self.mul(&a.c1, &b.c1, &primes);
        let (k0, k1) = self.key_switch(&d2, &keys.relin);
        self.add_assign(&mut d0, &k0, &primes);
        self.add_assign(&mut d1, &k1, &primes);
        self.rescale(&mut d0);
        self.rescale(&mut d1);
        let scale = product_scale(a.scale, b.scale, self.prime(a.level));
        Ok(Ciphertext { c0: d0, c1: d1, level: a.level - 1, scale })
    }

    /// Steps whose keys realize a left rotation by `step`: the step itself
    /// when a key exists, otherwise its binary decomposition.
    pub fn rotation_plan(&self, step: usize, keys: &PublicKeys) -> Result<Vec<usize>> {
        rotation_plan(step, self.slots(), |s| keys.rotations.contains_key(&s))
    }

    /// Left rotation: slot `i` of the result holds slot `i + step` of the input.
    /// Returns the ciphertext and the number of key-switched rotations applied.
    pub fn rotate(
        &self,
        a: &Ciphertext,
        step: usize,
        keys: &PublicKeys,
    ) -> Result<(Ciphertext, usize)> {
        self.check_keys(keys)?;
        let plan = self.rotation_plan(step, keys)?;
        let mut out = a.clone();
        for &s in &plan {
            out = self.rotate_once(&out, s, &keys.rotations[&s]);
        }
        Ok((out, plan.len()))
    }

    fn rotate_once(&self, a: &Ciphertext, step: usize, key: &SwitchKey) -> Ciphertext {
        let primes = level_primes(a.level);
        let g = self.encoder().galois_element(step);
        let mut c0 = self.automorphism(&a.c0, g, &primes);
        let c1 = self.automorphism(&a.c1, g, &primes);
        let (k0, k1) = self.key_switch(&c1, key);
        self.add_assign(&mut c0, &k0, &primes);
        Ciphertext { c0, c1: k1, level: a.level, scale: a.scale }
    }

    /// Moves to a lower level by discarding primes; the message is unchanged.
    pub fn level_drop(&self, a: &Ciphertext, target: usize) -> Result<Ciphertext> {
        if target > a.level {
            return Err(Error::LevelRaise { current: a.level, target });
        }
        let mut out = a.clone();
        out.c0.truncate(target + 1);
        out.c1.truncate(target + 1);
        out.level = target;
        Ok(out)
    }

    /// Returns `(k0, k1)` with `k0 + k1*s ~ d*s'` for the key's source secret `s'`.
    fn key_switch(&self, d: &RnsPoly, key: &SwitchKey) -> (RnsPoly, RnsPoly) {
        let l = d.limbs.len() - 1;
        let sp = self.special_index();
        let ext: Vec<usize> = (0..=l).chain(std::iter::once(sp)).collect();
        let n = self.n();
        let mut acc0 = RnsPoly::zero(ext.len(), n);
        let mut acc1 = RnsPoly::zero(ext.len(), n);
        for j in 0..=l {
            let mut coeffs = d.limbs[j].clone();
            self.intt(j, &mut coeffs);
            let qj = *self.modulus(j);
            let centered: Vec<i64> = coeffs.iter().map(|&c| qj.center(c)).collect();
            let (kb, ka) = &key.digits[j];
            for (t, &idx) in ext.iter().enumerate() {
                let m = *self.modulus(idx);
                let v = if idx == j {
                    d.limbs[j].clone()
                } else {
                    let mut v: Vec<u64> = centered.iter().map(|&c| m.reduce_i64(c)).collect();
                    self.ntt(idx, &mut v);
                    v
                };
                let (b, a) = (&kb.limbs[idx], &ka.limbs[idx]);
                for (k, &x) in v.iter().enumerate() {
                    acc0.limbs[t][k] = m.add(acc0.limbs[t][k], m.mul(x, b[k]));
                    acc1.limbs[t][k] = m.add(acc1.limbs[t][k], m.mul(x, a[k]));
                }
            }
        }
        self.mod_down(&mut acc0);
        self.mod_down(&mut acc1);
        (acc0, acc1)
    }
}
