//! Polynomial sigmoid fit and its encrypted evaluation.
//!
//! Run with `cargo run --release --example poly_activation`.

use std::sync::Arc;

use hesplit::backend::Backend;
use hesplit::ckks::{keygen, CkksContext, CryptoParams};
use hesplit::nn::poly::{chebyshev_fit, eval_poly_encrypted, sigmoid, Target};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> hesplit::Result<()> {
    for degree in [3, 5, 7, 9] {
        let p = chebyshev_fit(Target::Sigmoid, degree, -8.0, 8.0)?;
        println!("degree {degree}: max error {:.3e} on [-8, 8], {} levels", p.error_bound, p.levels_consumed);
    }

    let ctx = Arc::new(CkksContext::new(CryptoParams::new(12, 160, 30)?));
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let keys = keygen(&ctx, &[], &mut rng)?;
    let backend = Backend::ckks(ctx, &keys);

    let p = chebyshev_fit(Target::Sigmoid, 7, -8.0, 8.0)?;
    let xs: Vec<f64> = (0..backend.slots()).map(|i| -8.0 + 16.0 * i as f64 / backend.slots() as f64).collect();
    let ct = backend.encrypt(&xs, Some(p.input_scale(backend.default_scale())), &mut rng)?;
    let out = eval_poly_encrypted(&backend, &ct, &p)?;
    let dec = backend.decrypt(&out)?;
    let vs_poly = xs.iter().zip(&dec).map(|(x, y)| (p.eval(*x) - y).abs()).fold(0.0, f64::max);
    let vs_sigmoid = xs.iter().zip(&dec).map(|(x, y)| (sigmoid(*x) - y).abs()).fold(0.0, f64::max);
    println!("encrypted degree 7: level {} -> {}", ct.level(), out.level());
    println!("max |dec - p(x)| = {vs_poly:.3e}, max |dec - sigmoid(x)| = {vs_sigmoid:.3e}");
    Ok(())
}
