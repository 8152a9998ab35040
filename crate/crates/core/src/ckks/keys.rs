use std::collections::BTreeMap;

use rand::Rng;

use super::context::{CkksContext, RnsPoly};
use crate::error::{Error, Result};

/// Sparse ternary secret, kept in NTT form over every prime including `P`.
#[derive(Clone, Debug)]
pub struct SecretKey {
    pub(crate) coeffs: Vec<i64>,
    pub(crate) ntt: RnsPoly,
}

/// RLWE public key `(b, a) = (-a*s + e, a)` over `q_0..q_L`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub(crate) b: RnsPoly,
    pub(crate) a: RnsPoly,
}

/// Hybrid key-switching key with one digit per chain prime.
///
/// Digit `j` encrypts `P * s'` restricted to residue `j`, over `q_0..q_L, P`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwitchKey {
    pub(crate) digits: Vec<(RnsPoly, RnsPoly)>,
}

/// Everything a party without the secret needs for homomorphic evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKeys {
    pub(crate) params_digest: [u8; 32],
    pub(crate) public: PublicKey,
    pub(crate) relin: SwitchKey,
    pub(crate) rotations: BTreeMap<usize, SwitchKey>,
}

impl PublicKeys {
    pub fn rotation_steps(&self) -> Vec<usize> {
        self.rotations.keys().copied().collect()
    }

    pub fn rotation_key_count(&self) -> usize {
        self.rotations.len()
    }

    pub fn has_rotation(&self, step: usize) -> bool {
        self.rotations.contains_key(&step)
    }

    pub fn params_digest(&self) -> &[u8; 32] {
        &self.params_digest
    }
}

/// Secret key plus the public evaluation material derived from it.
#[derive(Clone, Debug)]
pub struct KeyBundle {
    pub(crate) secret: SecretKey,
    pub(crate) public: PublicKeys,
}

impl KeyBundle {
    pub fn public(&self) -> &PublicKeys {
        &self.public
    }

    pub fn secret(&self) -> &SecretKey {
        &self.secret
    }

    pub fn rotation_key_count(&self) -> usize {
        self.public.rotations.len()
    }
}

fn all_primes(ctx: &CkksContext) -> Vec<usize> {
    (0..=ctx.special_index()).collect()
}

pub fn gen_secret<R: Rng + ?Sized>(ctx: &CkksContext, rng: &mut R) -> SecretKey {
    let h = ctx.params().secret_hamming_weight();
    let coeffs = ctx.sample_sparse_ternary(rng, h);
    let ntt = ctx.from_signed(&coeffs, &all_primes(ctx));
    SecretKey { coeffs, ntt }
}

fn secret_at(sk: &SecretKey, primes: &[usize]) -> RnsPoly {
    RnsPoly { limbs: primes.iter().map(|&i| sk.ntt.limbs[i].clone()).collect() }
}

pub fn gen_public<R: Rng + ?Sized>(ctx: &CkksContext, sk: &SecretKey, rng: &mut R) -> PublicKey {
    let primes: Vec<usize> = (0..=ctx.max_level()).collect();
    let a = ctx.sample_uniform(rng, &primes);
    let e = ctx.from_signed(&ctx.sample_gaussian(rng), &primes);
    let s = secret_at(sk, &primes);
    let mut b = ctx.mul(&a, &s, &primes);
    ctx.neg_assign(&mut b, &primes);
    ctx.add_assign(&mut b, &e, &primes);
    PublicKey { b, a }
}

/// Key switching from `s_from` (NTT form over all primes) to `sk`.
pub fn gen_switch_key<R: Rng + ?Sized>(
    ctx: &CkksContext,
    s_from: &RnsPoly,
    sk: &SecretKey,
    rng: &mut R,
) -> SwitchKey {
    let primes = all_primes(ctx);
    let digits = (0..=ctx.max_level())
        .map(|j| {
            let a = ctx.sample_uniform(rng, &primes);
            let e = ctx.from_signed(&ctx.sample_gaussian(rng), &primes);
            let mut b = ctx.mul(&a, &sk.ntt, &primes);
            ctx.neg_assign(&mut b, &primes);
            ctx.add_assign(&mut b, &e, &primes);
            let m = ctx.modulus(j);
            let pj = ctx.p_mod(j);
            for (u, &v) in b.limbs[j].iter_mut().zip(&s_from.limbs[j]) {
                *u = m.add(*u, m.mul(pj, v));
            }
            (b, a)
        })
        .collect();
    SwitchKey { digits }
}

pub fn gen_relin<R: Rng + ?Sized>(ctx: &CkksContext, sk: &SecretKey, rng: &mut R) -> SwitchKey {
    let primes = all_primes(ctx);
    let s2 = ctx.mul(&sk.ntt, &sk.ntt, &primes);
    gen_switch_key(ctx, &s2, sk, rng)
}

pub fn gen_rotation<R: Rng + ?Sized>(
    ctx: &CkksContext,
    sk: &SecretKey,
    step: usize,
    rng: &mut R,
) -> SwitchKey {
    let primes = all_primes(ctx);
    let g = ctx.encoder().galois_element(step);
    let rotated = ctx.automorphism(&sk.ntt, g, &primes);
    gen_switch_key(ctx, &rotated, sk, rng)
}

/// Generates a key bundle with rotation keys for exactly the requested
/// steps. Step 0 needs no key and is ignored.
pub fn keygen<R: Rng + ?Sized>(
    ctx: &CkksContext,
    rotation_steps: &[usize],
    rng: &mut R,
) -> Result<KeyBundle> {
    let slots = ctx.slots();
    if let Some(&bad) = rotation_steps.iter().find(|&&s| s >= slots) {
        return Err(Error::RotationOutOfRange { step: bad, slots });
    }
    let secret = gen_secret(ctx, rng);
    let public = gen_public(ctx, &secret, rng);
    let relin = gen_relin(ctx, &secret, rng);
    let mut rotations = BTreeMap::new();
    for &step in rotation_steps {
        if step != 0 && !rotations.contains_key(&step) {
            rotations.insert(step, gen_rotation(ctx, &secret, step, rng));
        }
    }
    Ok(KeyBundle {
        public: PublicKeys { params_digest: ctx.params().digest(), public, relin, rotations },
        secret,
    })
}

/// Steps whose keys realize a left rotation by `step`: the step itself
/// when a key exists, otherwise its binary decomposition.
pub fn rotation_plan(step: usize, slots: usize, has_key: impl Fn(usize) -> bool) -> Result<Vec<usize>> {
    let step = step % slots;
    if step == 0 {
        return Ok(Vec::new());
    }
    if has_key(step) {
        return Ok(vec![step]);
    }
    let mut plan = Vec::new();
    let mut bit = 1usize;
    while bit < slots {
        if step & bit != 0 {
            if !has_key(bit) {
                return Err(Error::MissingRotationKey(bit));
            }
            plan.push(bit);
        }
        bit <<= 1;
    }
    Ok(plan)
}

/// Every power-of-two step below `N/2`.
pub fn power_of_two_steps(slots: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |s| Some(s * 2)).take_while(|&s| s < slots).collect()
}

impl SecretKey {
    pub fn coefficients(&self) -> &[i64] {
        &self.coeffs
    }
}
