use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arith::ntt_primes_below;
use crate::error::{Error, Result};

/// Extra bits of the base prime over the scale; bounds the plaintext
/// magnitude a level-0 ciphertext can hold to roughly `2^BASE_HEADROOM`.
const BASE_HEADROOM: u32 = 3;
/// Extra bits of the key-switching prime over the scale.
const SPECIAL_HEADROOM: u32 = 5;

/// Ring, modulus chain and noise configuration for the approximate scheme.
///
/// The chain is `[q_0, q_1, ..., q_L]` plus one special prime `P` used only
/// during key switching. `q_0` carries `BASE_HEADROOM` bits above the scale
/// and every rescaling prime has exactly `scale_log` bits, so the level
/// budget `L` is derived from the `log_qp` bit budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CryptoParams {
    ring_size_log: u32,
    log_qp: u32,
    scale_log: u32,
    noise_stddev: f64,
    secret_hamming_weight: usize,
    moduli: Vec<u64>,
    special_prime: u64,
}

impl CryptoParams {
    pub fn new(ring_size_log: u32, log_qp: u32, scale_log: u32) -> Result<Self> {
        Self::with_noise(ring_size_log, log_qp, scale_log, 3.2, 192)
    }

    pub fn with_noise(
        ring_size_log: u32,
        log_qp: u32,
        scale_log: u32,
        noise_stddev: f64,
        secret_hamming_weight: usize,
    ) -> Result<Self> {
        if !(10..=16).contains(&ring_size_log) {
            return Err(Error::InvalidParams(format!(
                "ring_size_log must be in [10, 16], got {ring_size_log}"
            )));
        }
        if !(20..=50).contains(&scale_log) {
            return Err(Error::InvalidParams(format!(
                "scale_log must be in [20, 50], got {scale_log}"
            )));
        }
        if !(noise_stddev > 0.0 && noise_stddev.is_finite()) {
            return Err(Error::InvalidParams("noise_stddev must be positive".into()));
        }
        let n = 1usize << ring_size_log;
        if secret_hamming_weight == 0 || secret_hamming_weight > n {
            return Err(Error::InvalidParams("secret hamming weight out of range".into()));
        }
        let special_bits = scale_log + SPECIAL_HEADROOM;
        let base_bits = scale_log + BASE_HEADROOM;
        let fixed = special_bits + base_bits;
        if log_qp < fixed + scale_log {
            return Err(Error::InvalidParams(format!(
                "log_qp = {log_qp} leaves no rescaling level (need at least {})",
                fixed + scale_log
            )));
        }
        let levels = ((log_qp - fixed) / scale_log) as usize;
        let two_n = 2 * n as u64;
        let special_prime = ntt_primes_below(special_bits, two_n, 1, &[])[0];
        let base = ntt_primes_below(base_bits, two_n, 1, &[special_prime])[0];
        let mut moduli = vec![base];
        moduli.extend(ntt_primes_below(scale_log, two_n, levels, &[special_prime, base]));
        Ok(CryptoParams {
            ring_size_log,
            log_qp,
            scale_log,
            noise_stddev,
            secret_hamming_weight,
            moduli,
            special_prime,
        })
    }

    /// `N = 2^14`, `logQP = 438`, scale `2^30`.
    pub fn set1() -> Self {
        Self::new(14, 438, 30).expect("set 1 is valid")
    }

    /// `N = 2^13`, `logQP = 218`, scale `2^30`.
    pub fn set2() -> Self {
        Self::new(13, 218, 30).expect("set 2 is valid")
    }

    pub fn ring_size_log(&self) -> u32 {
        self.ring_size_log
    }

    pub fn ring_size(&self) -> usize {
        1 << self.ring_size_log
    }

    pub fn slot_count(&self) -> usize {
        self.ring_size() / 2
    }

    pub fn log_qp(&self) -> u32 {
        self.log_qp
    }

    pub fn scale_log(&self) -> u32 {
        self.scale_log
    }

    pub fn scale(&self) -> f64 {
        (self.scale_log as f64).exp2()
    }

    pub fn noise_stddev(&self) -> f64 {
        self.noise_stddev
    }

    pub fn secret_hamming_weight(&self) -> usize {
        self.secret_hamming_weight
    }

    /// `L`: the number of rescaling primes above the base prime.
    pub fn level_budget(&self) -> usize {
        self.moduli.len() - 1
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn special_prime(&self) -> u64 {
        self.special_prime
    }

    /// Sum of the nominal bit sizes of every prime, special prime included.
    pub fn total_modulus_bits(&self) -> u32 {
        self.scale_log + SPECIAL_HEADROOM
            + self.scale_log
            + BASE_HEADROOM
            + self.scale_log * self.level_budget() as u32
    }

    /// Stable digest of the parameter set.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"hesplit-params-v1");
        h.update(self.ring_size_log.to_le_bytes());
        h.update(self.log_qp.to_le_bytes());
        h.update(self.scale_log.to_le_bytes());
        h.update(self.noise_stddev.to_le_bytes());
        h.update((self.secret_hamming_weight as u64).to_le_bytes());
        for q in &self.moduli {
            h.update(q.to_le_bytes());
        }
        h.update(self.special_prime.to_le_bytes());
        h.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_derive_level_budget_within_log_qp() {
        let s2 = CryptoParams::set2();
        assert_eq!(s2.slot_count(), 4096);
        assert_eq!(s2.level_budget(), 5);
        assert!(s2.total_modulus_bits() <= 218);

        let s1 = CryptoParams::set1();
        assert_eq!(s1.slot_count(), 8192);
        assert_eq!(s1.level_budget(), 12);
        assert!(s1.total_modulus_bits() <= 438);
    }

    #[test]
    fn primes_have_nominal_sizes() {
        let p = CryptoParams::set2();
        assert_eq!(64 - p.moduli()[0].leading_zeros(), 33);
        for q in &p.moduli()[1..] {
            assert_eq!(64 - q.leading_zeros(), 30);
        }
        assert_eq!(64 - p.special_prime().leading_zeros(), 35);
    }

    #[test]
    fn rejects_small_ring_and_tiny_budget() {
        assert!(CryptoParams::new(9, 218, 30).is_err());
        assert!(CryptoParams::new(13, 90, 30).is_err());
    }

    #[test]
    fn digest_depends_on_params() {
        assert_ne!(CryptoParams::set1().digest(), CryptoParams::set2().digest());
        assert_eq!(CryptoParams::set2().digest(), CryptoParams::set2().digest());
    }
}
