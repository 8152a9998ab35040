//! Leveled approximate homomorphic encryption over `Z[X]/(X^N + 1)`.
//!
//! RNS representation with a chain of NTT-friendly primes, hybrid key
//! switching through one special prime, eager rescaling after every
//! multiplication and exact scale tracking. Not constant time.

pub mod arith;
mod ciphertext;
mod context;
pub mod encoding;
mod keys;
pub mod params;
pub mod serial;

pub use ciphertext::{operand_scale, product_scale, Ciphertext, Plaintext};
pub use context::{CkksContext, RnsPoly};
pub use keys::{keygen, power_of_two_steps, rotation_plan, KeyBundle, PublicKeys, SecretKey};
pub use params::CryptoParams;

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::error::Error;

    struct Fixture {
        ctx: CkksContext,
        keys: KeyBundle,
    }

    fn fixture() -> &'static Fixture {
        static F: OnceLock<Fixture> = OnceLock::new();
        F.get_or_init(|| {
            let ctx = CkksContext::new(CryptoParams::new(12, 160, 30).unwrap());
            let mut rng = ChaCha20Rng::seed_from_u64(1);
            let steps = power_of_two_steps(ctx.slots());
            let keys = keygen(&ctx, &steps, &mut rng).unwrap();
            Fixture { ctx, keys }
        })
    }

    fn random_vec(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn encrypt_decrypt_round_trip() {
        let f = fixture();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let v = random_vec(&mut rng, f.ctx.slots());
        let ct = f.ctx.encrypt_values(&v, f.keys.public(), &mut rng).unwrap();
        assert_eq!(ct.level(), f.ctx.max_level());
        let out = f.ctx.decrypt_values(&ct, f.keys.secret());
        assert!(max_err(&v, &out) < 1e-4);
    }

    #[test]
    fn wrong_secret_gives_garbage() {
        let f = fixture();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let other = keygen(&f.ctx, &[], &mut rng).unwrap();
        let v = random_vec(&mut rng, f.ctx.slots());
        let ct = f.ctx.encrypt_values(&v, f.keys.public(), &mut rng).unwrap();
        let out = f.ctx.decrypt_values(&ct, other.secret());
        assert!(max_err(&v, &out) > 1.0);
    }

    #[test]
    fn homomorphic_ops_match_plaintext() {
        let f = fixture();
        let ctx = &f.ctx;
        let pk = f.keys.public();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let v = random_vec(&mut rng, ctx.slots());
        let w = random_vec(&mut rng, ctx.slots());
        let a = ctx.encrypt_values(&v, pk, &mut rng).unwrap();
        let b = ctx.encrypt_values(&w, pk, &mut rng).unwrap();

        let sum = ctx.decrypt_values(&ctx.add(&a, &b).unwrap(), f.keys.secret());
        let want: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x + y).collect();
        assert!(max_err(&sum, &want) < 2e-4);

        let prod: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x * y).collect();
        let mp = ctx.mul_plain(&a, &w, None).unwrap();
        assert_eq!(mp.level(), a.level() - 1);
        assert_eq!(mp.scale(), a.scale());
        assert!(max_err(&ctx.decrypt_values(&mp, f.keys.secret()), &prod) < 1e-3);

        let mc = ctx.mul_ct(&a, &b, pk).unwrap();
        assert_eq!(mc.level(), a.level() - 1);
        assert!(max_err(&ctx.decrypt_values(&mc, f.keys.secret()), &prod) < 1e-3);

        let ms = ctx.mul_scalar(&a, -0.75, None).unwrap();
        let want: Vec<f64> = v.iter().map(|x| -0.75 * x).collect();
        assert!(max_err(&ctx.decrypt_values(&ms, f.keys.secret()), &want) < 1e-3);

        let asc = ctx.add_scalar(&a, 0.25).unwrap();
        let want: Vec<f64> = v.iter().map(|x| x + 0.25).collect();
        assert!(max_err(&ctx.decrypt_values(&asc, f.keys.secret()), &want) < 1e-4);
    }

    #[test]
    fn mul_plain_hits_requested_scale() {
        let f = fixture();
        let ctx = &f.ctx;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let v = random_vec(&mut rng, 16);
        let a = ctx.encrypt_values(&v, f.keys.public(), &mut rng).unwrap();
        let target = 1.5 * 2f64.powi(30);
        let out = ctx.mul_plain(&a, &v, Some(target)).unwrap();
        assert_eq!(out.scale(), target);
    }

    #[test]
    fn rotation_moves_slots_left() {
        let f = fixture();
        let ctx = &f.ctx;
        let pk = f.keys.public();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let slots = ctx.slots();
        let v = random_vec(&mut rng, slots);
        let a = ctx.encrypt_values(&v, pk, &mut rng).unwrap();
        for step in [1usize, 5, 64, slots - 1] {
            let (r, _) = ctx.rotate(&a, step, pk).unwrap();
            let out = ctx.decrypt_values(&r, f.keys.secret());
            let want: Vec<f64> = (0..slots).map(|i| v[(i + step) % slots]).collect();
            assert!(max_err(&out, &want) < 1e-3, "step {step}");
        }
        let (id, count) = ctx.rotate(&a, 0, pk).unwrap();
        assert_eq!(count, 0);
        assert_eq!(id, a);
        let (half, _) = ctx.rotate(&a, slots / 2, pk).unwrap();
        let (full, _) = ctx.rotate(&half, slots / 2, pk).unwrap();
        assert!(max_err(&ctx.decrypt_values(&full, f.keys.secret()), &v) < 1e-3);
    }

    #[test]
    fn missing_rotation_key_is_reported() {
        let f = fixture();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let keys = keygen(&f.ctx, &[1], &mut rng).unwrap();
        let a = f.ctx.encrypt_values(&[1.0], keys.public(), &mut rng).unwrap();
        assert!(f.ctx.rotate(&a, 1, keys.public()).is_ok());
        assert!(matches!(f.ctx.rotate(&a, 2, keys.public()), Err(Error::MissingRotationKey(2))));
    }

    #[test]
    fn level_chain_is_exhausted_after_budget() {
        let f = fixture();
        let ctx = &f.ctx;
        let pk = f.keys.public();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut a = ctx.encrypt_values(&[0.9, -0.5], pk, &mut rng).unwrap();
        let mut want = [0.9f64, -0.5];
        for _ in 0..ctx.max_level() {
            a = ctx.mul_ct(&a, &a, pk).unwrap();
            want = [want[0] * want[0], want[1] * want[1]];
        }
        assert_eq!(a.level(), 0);
        let out = ctx.decrypt_values(&a, f.keys.secret());
        assert!((out[0] - want[0]).abs() < 1e-3 && (out[1] - want[1]).abs() < 1e-3);
        assert!(matches!(ctx.mul_ct(&a, &a, pk), Err(Error::LevelExhausted { .. })));
        assert!(matches!(ctx.mul_plain(&a, &[1.0], None), Err(Error::LevelExhausted { .. })));
    }

    #[test]
    fn level_and_scale_mismatch_rejected() {
        let f = fixture();
        let ctx = &f.ctx;
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let a = ctx.encrypt_values(&[1.0], f.keys.public(), &mut rng).unwrap();
        let low = ctx.level_drop(&a, a.level() - 1).unwrap();
        assert!(matches!(ctx.add(&a, &low), Err(Error::LevelMismatch { .. })));
        assert!(matches!(ctx.level_drop(&low, a.level()), Err(Error::LevelRaise { .. })));
        let scaled = ctx.encrypt_values_at(&[1.0], 2f64.powi(31), f.keys.public(), &mut rng).unwrap();
        assert!(matches!(ctx.add(&a, &scaled), Err(Error::ScaleMismatch { .. })));
        let prod = ctx.mul_plain(&a, &[2.0], None).unwrap();
        assert!(ctx.add(&low, &prod).is_ok());
    }

    #[test]
    fn serialization_round_trips_bytes() {
        let f = fixture();
        let ctx = &f.ctx;
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let a = ctx.encrypt_values(&[0.5, 0.25], f.keys.public(), &mut rng).unwrap();
        let a = ctx.mul_plain(&a, &[3.0, 3.0], None).unwrap();
        let bytes = serial::serialize_ciphertext(ctx, &a);
        assert_eq!(bytes.len(), serial::ciphertext_size(12, a.level()));
        assert_eq!(&bytes[..4], b"CKK1");
        let back = serial::deserialize_ciphertext(ctx, &bytes).unwrap();
        assert_eq!(back, a);
        assert_eq!(serial::serialize_ciphertext(ctx, &back), bytes);
        let err = serial::deserialize_ciphertext(ctx, &bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));

        let kb = keygen(ctx, &[1, 2], &mut rng).unwrap();
        let kbytes = serial::serialize_public_keys(ctx, kb.public());
        let kback = serial::deserialize_public_keys(ctx, &kbytes).unwrap();
        assert_eq!(&kback, kb.public());
    }

    #[test]
    fn keygen_generates_requested_steps_only() {
        let f = fixture();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let kb = keygen(&f.ctx, &[0, 3, 3, 8], &mut rng).unwrap();
        assert_eq!(kb.public().rotation_steps(), vec![3, 8]);
        let slots = f.ctx.slots();
        assert!(matches!(
            keygen(&f.ctx, &[slots], &mut rng),
            Err(Error::RotationOutOfRange { .. })
        ));
    }
}
