//! Encrypted matrix products with the three slot layouts.
//!
//! Run with `cargo run --release --example packing`.

use hesplit::backend::{Backend, NoiseModel};
use hesplit::ckks::{power_of_two_steps, CryptoParams};
use hesplit::matrix::Matrix;
use hesplit::packing::{
    choose_packing, client_fold, encrypt_layout, matmat_rotsum, matvec_one_level, pack_columns_rotsum,
    pack_matrix_batch, pack_matrix_scalar, RowOperand,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> hesplit::Result<()> {
    let params = CryptoParams::set2();
    let steps = power_of_two_steps(params.slot_count());
    let backend = Backend::noise_sim(params.clone(), NoiseModel::for_params(&params), &steps);
    let mut rng = ChaCha20Rng::seed_from_u64(3);

    let w = Matrix::from_fn(4, 4, |i, j| (i as f64 - j as f64) * 0.25);
    let x = [1.0, 2.0, 3.0, 4.0];
    println!("plaintext W x     = {:?}", w.matvec(&x)?);

    let batch = pack_matrix_batch(&w, &backend, Some(16), &mut rng)?;
    let out = backend.decrypt(&matvec_one_level(&batch, &x, &backend)?[0])?;
    let m = &batch.meta;
    let folded = client_fold(&out[..m.cols_per_ct * m.padded_col_len], m.cols_per_ct, m.padded_col_len, 4)?;
    println!("batch  ({} cts)    = {folded:.6?}", batch.ciphertexts.len());

    let scalar = pack_matrix_scalar(&w, &backend, Some(16), &mut rng)?;
    let out = backend.decrypt(&matvec_one_level(&scalar, &x, &backend)?[0])?;
    println!("scalar ({} cts)    = {:.6?}", scalar.ciphertexts.len(), &out[..4]);

    // 3x3 times 3x5 in an 8-slot layout: columns padded to 4, two per vector.
    let a = Matrix::from_fn(3, 3, |i, j| (i * 3 + j + 1) as f64 * 0.1);
    let b = Matrix::from_fn(3, 5, |i, j| (i * 5 + j + 1) as f64 * 0.01);
    let layout = pack_columns_rotsum(&b, 8)?;
    for (k, v) in layout.vectors.iter().enumerate() {
        println!("B vector {k}: {:?}", &v[..8]);
    }
    let pw = encrypt_layout(&layout, &backend, &mut rng)?;
    let r = matmat_rotsum(RowOperand::Plain(&a), &pw, &backend)?;
    println!("marked (ct, slot) positions of row 0: {:?}", &r.mark_positions()[..5]);
    println!("rotations: {}", r.rotations);
    println!("max |A B - extracted| = {:.3e}", r.extract(&backend)?.max_abs_diff(&a.matmul(&b)?));

    for l2 in [128, 1517, 1518, 4096] {
        println!("second layer {l2:>4}: {:?}", choose_packing(l2, params.slot_count(), 2.7));
    }
    Ok(())
}
