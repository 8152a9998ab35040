//! RNS polynomial arithmetic bound to one parameter set.

use rand::Rng;

use super::arith::{Modulus, NttTable};
use super::encoding::Encoder;
use super::params::CryptoParams;
use crate::error::{Error, Result};

/// A polynomial in RNS form: one residue vector per prime, in NTT form
/// unless stated otherwise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnsPoly {
    pub limbs: Vec<Vec<u64>>,
}

impl RnsPoly {
    pub fn zero(limbs: usize, n: usize) -> Self {
        RnsPoly { limbs: vec![vec![0; n]; limbs] }
    }

    pub fn limb_count(&self) -> usize {
        self.limbs.len()
    }

    pub fn truncate(&mut self, limbs: usize) {
        self.limbs.truncate(limbs);
    }
}

/// Precomputed tables for the prime chain `q_0..q_L` and the special prime `P`.
///
/// Prime index `L + 1` always refers to `P`.
#[derive(Debug)]
pub struct CkksContext {
    params: CryptoParams,
    n: usize,
    moduli: Vec<Modulus>,
    tables: Vec<NttTable>,
    encoder: Encoder,
    /// `rescale_inv[l][i] = q_l^{-1} mod q_i` for `i < l`.
    rescale_inv: Vec<Vec<u64>>,
    /// `P^{-1} mod q_i`.
    p_inv: Vec<u64>,
    /// `P mod q_i`.
    p_mod: Vec<u64>,
    /// `prefix_mod[k][j] = (q_0 * ... * q_{j-1}) mod q_k` for `j <= k`.
    prefix_mod: Vec<Vec<u64>>,
    /// `(q_0 * ... * q_{k-1})^{-1} mod q_k`.
    prefix_inv: Vec<u64>,
    /// `q_0 * ... * q_{j-1}` as floating point.
    prefix_f64: Vec<f64>,
    /// Mixed-radix digits of `(Q_l - 1) / 2` for each level `l`.
    half_digits: Vec<Vec<u64>>,
}

impl CkksContext {
    pub fn new(params: CryptoParams) -> Self {
        let n = params.ring_size();
        let mut primes: Vec<u64> = params.moduli().to_vec();
        primes.push(params.special_prime());
        let moduli: Vec<Modulus> = primes.iter().map(|&q| Modulus::new(q)).collect();
        let tables = primes.iter().map(|&q| NttTable::new(q, n)).collect();
        let chain = params.moduli().len();

        let rescale_inv = (0..chain)
            .map(|l| (0..l).map(|i| moduli[i].inv(moduli[i].reduce(primes[l]))).collect())
            .collect();
        let p = params.special_prime();
        let p_inv = (0..chain).map(|i| moduli[i].inv(moduli[i].reduce(p))).collect();
        let p_mod = (0..chain).map(|i| moduli[i].reduce(p)).collect();

        let mut prefix_mod = Vec::with_capacity(chain);
        let mut prefix_inv = Vec::with_capacity(chain);
        for k in 0..chain {
            let m = moduli[k];
            let mut row = Vec::with_capacity(k + 1);
            let mut acc = 1u64;
            for j in 0..=k {
                row.push(acc);
                if j < k {
                    acc = m.mul(acc, m.reduce(primes[j]));
                }
            }
            prefix_inv.push(m.inv(row[k]));
            prefix_mod.push(row);
        }
        let mut prefix_f64 = Vec::with_capacity(chain);
        let mut acc = 1.0f64;
        for &q in &primes[..chain] {
            prefix_f64.push(acc);
            acc *= q as f64;
        }

        // (Q - 1) / 2 by top-down halving of the digits of Q - 1, which are
        // all q_j - 1.
        let half_digits = (0..chain)
            .map(|l| {
                let mut digits = vec![0u64; l + 1];
                let mut rem = 0u128;
                for j in (0..=l).rev() {
                    let cur = rem * primes[j] as u128 + (primes[j] - 1) as u128;
                    digits[j] = (cur / 2) as u64;
                    rem = cur % 2;
                }
                digits
            })
            .collect();

        CkksContext {
            encoder: Encoder::new(n),
            params,
            n,
            moduli,
            tables,
            rescale_inv,
            p_inv,
            p_mod,
            prefix_mod,
            prefix_inv,
            prefix_f64,
            half_digits,
        }
    }

    pub fn params(&self) -> &CryptoParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slots(&self) -> usize {
        self.n / 2
    }

    pub fn max_level(&self) -> usize {
        self.params.level_budget()
    }

    /// Index of the special prime.
    pub fn special_index(&self) -> usize {
        self.moduli.len() - 1
    }

    pub fn modulus(&self, idx: usize) -> &Modulus {
        &self.moduli[idx]
    }

    pub fn prime(&self, idx: usize) -> u64 {
        self.moduli[idx].value()
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn p_mod(&self, i: usize) -> u64 {
        self.p_mod[i]
    }

    pub fn ntt(&self, idx: usize, a: &mut [u64]) {
        self.tables[idx].forward(a);
    }

    pub fn intt(&self, idx: usize, a: &mut [u64]) {
        self.tables[idx].inverse(a);
    }

    /// Reduces signed coefficients into each listed prime and transforms.
    pub fn from_signed(&self, coeffs: &[i64], primes: &[usize]) -> RnsPoly {
        let limbs = primes
            .iter()
            .map(|&idx| {
                let m = &self.moduli[idx];
                let mut v: Vec<u64> = coeffs.iter().map(|&c| m.reduce_i64(c)).collect();
                self.tables[idx].forward(&mut v);
                v
            })
            .collect();
        RnsPoly { limbs }
    }

    /// Same as [`CkksContext::from_signed`] for wide coefficients.
    pub fn from_wide(&self, coeffs: &[i128], primes: &[usize]) -> RnsPoly {
        let limbs = primes
            .iter()
            .map(|&idx| {
                let m = &self.moduli[idx];
                let mut v: Vec<u64> = coeffs.iter().map(|&c| m.reduce_i128(c)).collect();
                self.tables[idx].forward(&mut v);
                v
            })
            .collect();
        RnsPoly { limbs }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, primes: &[usize]) -> RnsPoly {
        let limbs = primes
            .iter()
            .map(|&idx| {
                let q = self.moduli[idx].value();
                (0..self.n).map(|_| rng.random_range(0..q)).collect()
            })
            .collect();
        RnsPoly { limbs }
    }

    /// Centered binomial approximation of a discrete Gaussian.
    pub fn sample_gaussian<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        let sigma = self.params.noise_stddev();
        let k = ((2.0 * sigma * sigma).round() as u32).clamp(1, 64);
        let mask = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
        (0..self.n)
            .map(|_| {
                let a = (rng.random::<u64>() & mask).count_ones() as i64;
                let b = (rng.random::<u64>() & mask).count_ones() as i64;
                a - b
            })
            .collect()
    }

    /// Ternary polynomial with `P(+1) = P(-1) = 1/4`.
    pub fn sample_ternary<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        (0..self.n)
            .map(|_| match rng.random::<u8>() & 3 {
                0 => 1,
                1 => -1,
                _ => 0,
            })
            .collect()
    }

    /// Ternary polynomial with exactly `h` nonzero coefficients.
    pub fn sample_sparse_ternary<R: Rng + ?Sized>(&self, rng: &mut R, h: usize) -> Vec<i64> {
        let mut out = vec![0i64; self.n];
        let idx = rand::seq::index::sample(rng, self.n, h);
        for i in idx {
            out[i] = if rng.random::<bool>() { 1 } else { -1 };
        }
        out
    }

    pub fn add_assign(&self, a: &mut RnsPoly, b: &RnsPoly, primes: &[usize]) {
        for ((x, y), &idx) in a.limbs.iter_mut().zip(&b.limbs).zip(primes) {
            let m = &self.moduli[idx];
            for (u, &v) in x.iter_mut().zip(y) {
                *u = m.add(*u, v);
            }
        }
    }

    pub fn sub_assign(&self, a: &mut RnsPoly, b: &RnsPoly, primes: &[usize]) {
        for ((x, y), &idx) in a.limbs.iter_mut().zip(&b.limbs).zip(primes) {
            let m = &self.moduli[idx];
            for (u, &v) in x.iter_mut().zip(y) {
                *u = m.sub(*u, v);
            }
        }
    }

    pub fn neg_assign(&self, a: &mut RnsPoly, primes: &[usize]) {
        for (x, &idx) in a.limbs.iter_mut().zip(primes) {
            let m = &self.moduli[idx];
            for u in x.iter_mut() {
                *u = m.neg(*u);
            }
        }
    }

    pub fn mul(&self, a: &RnsPoly, b: &RnsPoly, primes: &[usize]) -> RnsPoly {
        let limbs = a
            .limbs
            .iter()
            .zip(&b.limbs)
            .zip(primes)
            .map(|((x, y), &idx)| {
                let m = &self.moduli[idx];
                x.iter().zip(y).map(|(&u, &v)| m.mul(u, v)).collect()
            })
            .collect();
        RnsPoly { limbs }
    }

    /// `acc += a * b` pointwise.
    pub fn mul_acc(&self, acc: &mut RnsPoly, a: &RnsPoly, b: &RnsPoly, primes: &[usize]) {
        for (((z, x), y), &idx) in acc.limbs.iter_mut().zip(&a.limbs).zip(&b.limbs).zip(primes) {
            let m = &self.moduli[idx];
            for ((w, &u), &v) in z.iter_mut().zip(x).zip(y) {
                *w = m.add(*w, m.mul(u, v));
            }
        }
    }

    /// Multiplies every limb by an integer constant given per prime.
    pub fn mul_const_assign(&self, a: &mut RnsPoly, consts: &[u64], primes: &[usize]) {
        for ((x, &c), &idx) in a.limbs.iter_mut().zip(consts).zip(primes) {
            let m = &self.moduli[idx];
            let cs = m.shoup(c);
            for u in x.iter_mut() {
                *u = m.mul_shoup(*u, c, cs);
            }
        }
    }

    /// Divides a level-`l` polynomial by `q_l`, dropping the top limb.
    pub fn rescale(&self, a: &mut RnsPoly) {
        let l = a.limbs.len() - 1;
        let mut top = a.limbs.pop().expect("nonempty");
        self.tables[l].inverse(&mut top);
        let ql = &self.moduli[l];
        for (i, limb) in a.limbs.iter_mut().enumerate() {
            let m = &self.moduli[i];
            let mut t: Vec<u64> = top.iter().map(|&c| m.reduce_i64(ql.center(c))).collect();
            self.tables[i].forward(&mut t);
            let inv = self.rescale_inv[l][i];
            let inv_s = m.shoup(inv);
            for (u, &v) in limb.iter_mut().zip(&t) {
                *u = m.mul_shoup(m.sub(*u, v), inv, inv_s);
            }
        }
    }

    /// Divides a polynomial over `q_0..q_l, P` by `P`, dropping the last limb.
    pub fn mod_down(&self, a: &mut RnsPoly) {
        let mut top = a.limbs.pop().expect("nonempty");
        let sp = self.special_index();
        self.tables[sp].inverse(&mut top);
        let pm = &self.moduli[sp];
        for (i, limb) in a.limbs.iter_mut().enumerate() {
            let m = &self.moduli[i];
            let mut t: Vec<u64> = top.iter().map(|&c| m.reduce_i64(pm.center(c))).collect();
            self.tables[i].forward(&mut t);
            let inv = self.p_inv[i];
            let inv_s = m.shoup(inv);
            for (u, &v) in limb.iter_mut().zip(&t) {
                *u = m.mul_shoup(m.sub(*u, v), inv, inv_s);
            }
        }
    }

    /// Applies `X -> X^g` to an NTT-form polynomial.
    pub fn automorphism(&self, a: &RnsPoly, g: usize, primes: &[usize]) -> RnsPoly {
        let two_n = 2 * self.n;
        let limbs = a
            .limbs
            .iter()
            .zip(primes)
            .map(|(x, &idx)| {
                let m = &self.moduli[idx];
                let mut c = x.clone();
                self.tables[idx].inverse(&mut c);
                let mut out = vec![0u64; self.n];
                for (k, &v) in c.iter().enumerate() {
                    let e = k * g % two_n;
                    if e < self.n {
                        out[e] = v;
                    } else {
                        out[e - self.n] = m.neg(v);
                    }
                }
                self.tables[idx].forward(&mut out);
                out
            })
            .collect();
        RnsPoly { limbs }
    }

    /// Encodes real slot values at `scale` into an NTT-form plaintext at `level`.
    pub fn encode(&self, values: &[f64], scale: f64, level: usize) -> Result<RnsPoly> {
        if values.len() > self.slots() {
            return Err(Error::TooManyValues { len: values.len(), capacity: self.slots() });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Numerical(format!("invalid encoding scale {scale}")));
        }
        let coeffs = self.encoder.slots_to_coeffs(values);
        let bound = 2f64.powi(100);
        let mut wide = Vec::with_capacity(self.n);
        for c in coeffs {
            let v = (c * scale).round();
            if !v.is_finite() || v.abs() >= bound {
                return Err(Error::Numerical("encoded coefficient overflow".into()));
            }
            wide.push(v as i128);
        }
        let primes: Vec<usize> = (0..=level).collect();
        Ok(self.from_wide(&wide, &primes))
    }

    /// Encodes the same constant into every slot: the constant polynomial.
    pub fn encode_constant(&self, value: f64, scale: f64, level: usize) -> Result<Vec<u64>> {
        let v = (value * scale).round();
        if !v.is_finite() || v.abs() >= 2f64.powi(100) {
            return Err(Error::Numerical("encoded constant overflow".into()));
        }
        let v = v as i128;
        Ok((0..=level).map(|i| self.moduli[i].reduce_i128(v)).collect())
    }

    /// Recovers slot values from an NTT-form plaintext at `scale`.
    pub fn decode(&self, poly: &RnsPoly, scale: f64) -> Vec<f64> {
        let coeffs = self.to_centered_f64(poly);
        let unscaled: Vec<f64> = coeffs.iter().map(|c| c / scale).collect();
        self.encoder.coeffs_to_slots(&unscaled)
    }

    /// CRT reconstruction of every coefficient, centered in `(-Q/2, Q/2]`.
    pub fn to_centered_f64(&self, poly: &RnsPoly) -> Vec<f64> {
        let l = poly.limbs.len() - 1;
        let coeff_limbs: Vec<Vec<u64>> = poly
            .limbs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let mut c = x.clone();
                self.tables[i].inverse(&mut c);
                c
            })
            .collect();
        let half = &self.half_digits[l];
        let mut digits = vec![0u64; l + 1];
        (0..self.n)
            .map(|t| {
                for k in 0..=l {
                    let m = &self.moduli[k];
                    let mut acc = 0u64;
                    for j in 0..k {
                        acc = m.add(acc, m.mul(m.reduce(digits[j]), self.prefix_mod[k][j]));
                    }
                    digits[k] = m.mul(m.sub(coeff_limbs[k][t], acc), self.prefix_inv[k]);
                }
                let negative = (0..=l)
                    .rev()
                    .find(|&j| digits[j] != half[j])
                    .is_some_and(|j| digits[j] > half[j]);
                if negative {
                    // Q - 1 - x has digits q_j - 1 - d_j with no borrows.
                    let mut v = 0.0;
                    for j in 0..=l {
                        v += (self.prime(j) - 1 - digits[j]) as f64 * self.prefix_f64[j];
                    }
                    -(v + 1.0)
                } else {
                    let mut v = 0.0;
                    for j in 0..=l {
                        v += digits[j] as f64 * self.prefix_f64[j];
                    }
                    v
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_ctx() -> CkksContext {
        CkksContext::new(CryptoParams::new(10, 200, 30).unwrap())
    }

    #[test]
    fn crt_reconstruction_matches_bigint() {
        let ctx = small_ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let level = ctx.max_level();
        let primes: Vec<usize> = (0..=level).collect();
        let poly = ctx.sample_uniform(&mut rng, &primes);
        let got = ctx.to_centered_f64(&poly);

        let q: BigInt = primes.iter().map(|&i| BigInt::from(ctx.prime(i))).product();
        let half = &q / 2;
        let mut coeff = poly.clone();
        for (i, limb) in coeff.limbs.iter_mut().enumerate() {
            ctx.intt(i, limb);
        }
        for t in 0..ctx.n() {
            let mut x = BigInt::from(0);
            for (i, &p) in primes.iter().enumerate() {
                let qi = BigInt::from(ctx.prime(p));
                let qhat = &q / &qi;
                let inv = qhat.modpow(&(&qi - 2), &qi);
                x += BigInt::from(coeff.limbs[i][t]) * &qhat * inv;
            }
            x %= &q;
            if x > half {
                x -= &q;
            }
            let want: f64 = x.to_string().parse().unwrap();
            let tol = want.abs() * 1e-12 + 1e-9;
            assert!((got[t] - want).abs() <= tol, "{} vs {}", got[t], want);
        }
    }

    #[test]
    fn small_signed_values_round_trip_exactly() {
        let ctx = small_ctx();
        let level = 2;
        let primes: Vec<usize> = (0..=level).collect();
        let coeffs: Vec<i64> = (0..ctx.n() as i64).map(|i| (i - 500) * 12345).collect();
        let poly = ctx.from_signed(&coeffs, &primes);
        let back = ctx.to_centered_f64(&poly);
        for (a, b) in coeffs.iter().zip(&back) {
            assert_eq!(*a as f64, *b);
        }
    }

    #[test]
    fn rescale_divides_by_top_prime() {
        let ctx = small_ctx();
        let level = 2;
        let primes: Vec<usize> = (0..=level).collect();
        let ql = ctx.prime(level) as i128;
        let coeffs: Vec<i128> = (0..ctx.n() as i128).map(|i| (i - 300) * ql * 7 + 5).collect();
        let mut poly = ctx.from_wide(&coeffs, &primes);
        ctx.rescale(&mut poly);
        let back = ctx.to_centered_f64(&poly);
        for (i, b) in back.iter().enumerate() {
            let want = ((i as f64) - 300.0) * 7.0;
            assert!((b - want).abs() <= 1.0);
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let ctx = small_ctx();
        let vals: Vec<f64> = (0..ctx.slots()).map(|i| (i as f64 * 0.37).sin()).collect();
        let pt = ctx.encode(&vals, 2f64.powi(30), 3).unwrap();
        let out = ctx.decode(&pt, 2f64.powi(30));
        for (a, b) in vals.iter().zip(&out) {
            assert!((a - b).abs() < 2f64.powi(-24));
        }
    }
}
