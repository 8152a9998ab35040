//! Encrypt, compute and decrypt under the N = 2^13 parameter set.
//!
//! Run with `cargo run --release --example ckks_basics`.

use std::time::Instant;

use hesplit::ckks::{keygen, power_of_two_steps, CkksContext, CryptoParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() -> hesplit::Result<()> {
    let params = CryptoParams::set2();
    println!(
        "N = {}, slots = {}, level budget L = {}, modulus bits = {}",
        params.ring_size(),
        params.slot_count(),
        params.level_budget(),
        params.total_modulus_bits()
    );
    let ctx = CkksContext::new(params);
    let mut rng = ChaCha20Rng::seed_from_u64(2024);

    let t = Instant::now();
    let keys = keygen(&ctx, &power_of_two_steps(ctx.slots()), &mut rng)?;
    println!("keygen with {} rotation keys: {:.2?}", keys.rotation_key_count(), t.elapsed());
    let pk = keys.public();

    let v: Vec<f64> = (0..ctx.slots()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..ctx.slots()).map(|_| rng.random_range(-1.0..1.0)).collect();

    let t = Instant::now();
    let a = ctx.encrypt_values(&v, pk, &mut rng)?;
    println!("encrypt: {:.2?}", t.elapsed());
    let b = ctx.encrypt_values(&w, pk, &mut rng)?;

    let report = |name: &str, got: Vec<f64>, want: Vec<f64>| {
        let err = got.iter().zip(&want).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        println!("{name:<12} max |error| = {err:.3e}");
    };

    report("round trip", ctx.decrypt_values(&a, keys.secret()), v.clone());

    let sum = ctx.add(&a, &b)?;
    report("add", ctx.decrypt_values(&sum, keys.secret()), v.iter().zip(&w).map(|(x, y)| x + y).collect());

    let prod: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x * y).collect();
    let t = Instant::now();
    let mp = ctx.mul_plain(&a, &w, None)?;
    println!("mul_plain: {:.2?}", t.elapsed());
    report("mul_plain", ctx.decrypt_values(&mp, keys.secret()), prod.clone());

    let t = Instant::now();
    let mc = ctx.mul_ct(&a, &b, pk)?;
    println!("mul_ct: {:.2?} (level {} -> {})", t.elapsed(), a.level(), mc.level());
    report("mul_ct", ctx.decrypt_values(&mc, keys.secret()), prod);

    let t = Instant::now();
    let (r, _) = ctx.rotate(&a, 3, pk)?;
    println!("rotate by 3 (two key switches): {:.2?}", t.elapsed());
    let slots = ctx.slots();
    report("rotate", ctx.decrypt_values(&r, keys.secret()), (0..slots).map(|i| v[(i + 3) % slots]).collect());
    Ok(())
}
