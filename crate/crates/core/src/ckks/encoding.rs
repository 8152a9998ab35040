//! Canonical-embedding encoder.
//!
//! Slot `j` of a plaintext polynomial `m` is `m(zeta^(5^j))` with
//! `zeta = exp(i*pi/N)`. Real inputs are placed in the real parts; the
//! imaginary parts stay zero so that the coefficients are real.

use std::f64::consts::PI;

use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct Encoder {
    n: usize,
    slots: usize,
    rot_group: Vec<usize>,
    ksi_pows: Vec<Complex64>,
}

impl Encoder {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 4);
        let m = 2 * n;
        let slots = n / 2;
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = g * 5 % m;
        }
        let ksi_pows = (0..=m)
            .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64))
            .collect();
        Encoder { n, slots, rot_group, ksi_pows }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Galois element `5^step mod 2N` realizing a left rotation by `step` slots.
    pub fn galois_element(&self, step: usize) -> usize {
        self.rot_group[step % self.slots]
    }

    /// Maps slot values to (unscaled) real polynomial coefficients.
    pub fn slots_to_coeffs(&self, values: &[f64]) -> Vec<f64> {
        debug_assert!(values.len() <= self.slots);
        let mut vals = vec![Complex64::new(0.0, 0.0); self.slots];
        for (v, &x) in vals.iter_mut().zip(values) {
            v.re = x;
        }
        self.fft_special_inv(&mut vals);
        let mut coeffs = vec![0.0; self.n];
        for (i, v) in vals.iter().enumerate() {
            coeffs[i] = v.re;
            coeffs[i + self.slots] = v.im;
        }
        coeffs
    }

    /// Inverse of [`Encoder::slots_to_coeffs`]; returns the real parts.
    pub fn coeffs_to_slots(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.n);
        let mut vals: Vec<Complex64> = (0..self.slots)
            .map(|i| Complex64::new(coeffs[i], coeffs[i + self.slots]))
            .collect();
        self.fft_special(&mut vals);
        vals.into_iter().map(|c| c.re).collect()
    }

    fn fft_special(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.n;
        bit_reverse_permute(vals);
        let mut len = 2;
        while len <= size {
            let lenh = len >> 1;
            let lenq = len << 2;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * (m / lenq);
                    let u = vals[i + j];
                    let v = vals[i + j + lenh] * self.ksi_pows[idx];
                    vals[i + j] = u + v;
                    vals[i + j + lenh] = u - v;
                }
            }
            len <<= 1;
        }
    }

    fn fft_special_inv(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.n;
        let mut len = size;
        while len >= 1 {
            let lenh = len >> 1;
            let lenq = len << 2;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - (self.rot_group[j] % lenq)) * (m / lenq);
                    let u = vals[i + j] + vals[i + j + lenh];
                    let v = (vals[i + j] - vals[i + j + lenh]) * self.ksi_pows[idx];
                    vals[i + j] = u;
                    vals[i + j + lenh] = v;
                }
            }
            len >>= 1;
        }
        bit_reverse_permute(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            *v *= inv;
        }
    }
}

fn bit_reverse_permute(vals: &mut [Complex64]) {
    let n = vals.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j >= bit {
            j -= bit;
            bit >>= 1;
        }
        j += bit;
        if i < j {
            vals.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation of the polynomial at the slot roots.
    fn naive_slots(coeffs: &[f64]) -> Vec<f64> {
        let n = coeffs.len();
        let m = 2 * n;
        let mut out = Vec::new();
        let mut g = 1usize;
        for _ in 0..n / 2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &c) in coeffs.iter().enumerate() {
                let e = (k * g) % m;
                acc += Complex64::from_polar(c, PI * e as f64 / n as f64);
            }
            out.push(acc.re);
            g = g * 5 % m;
        }
        out
    }

    #[test]
    fn encoding_matches_direct_evaluation() {
        let enc = Encoder::new(32);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let coeffs = enc.slots_to_coeffs(&vals);
        let direct = naive_slots(&coeffs);
        for (a, b) in direct.iter().zip(&vals) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let back = enc.coeffs_to_slots(&coeffs);
        for (a, b) in back.iter().zip(&vals) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn galois_element_rotates_slots() {
        // m(X) -> m(X^g) with g = 5 shifts slots left by one.
        let n = 16;
        let enc = Encoder::new(n);
        let vals: Vec<f64> = (0..8).map(|i| i as f64 + 1.0).collect();
        let coeffs = enc.slots_to_coeffs(&vals);
        let g = enc.galois_element(1);
        let mut rotated = vec![0.0; n];
        for (k, &c) in coeffs.iter().enumerate() {
            let e = k * g % (2 * n);
            if e < n {
                rotated[e] += c;
            } else {
                rotated[e - n] -= c;
            }
        }
        let out = enc.coeffs_to_slots(&rotated);
        for i in 0..8 {
            assert!((out[i] - vals[(i + 1) % 8]).abs() < 1e-9);
        }
    }
}
