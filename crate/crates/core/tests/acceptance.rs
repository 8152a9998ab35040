//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Set `HESPLIT_ACCEPTANCE_FAST=1` to skip the long training runs
//! (criterion 6 and the live Model-1 epoch of criterion 4); skipped checks
//! print SKIP and do not count as passed.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use hesplit::backend::{Backend, NoiseModel};
use hesplit::ckks::{keygen, power_of_two_steps, CkksContext, CryptoParams};
use hesplit::config::Config;
use hesplit::data::Dataset;
use hesplit::estimator::{estimate_epoch, ideal_traffic_mb, EstimateRequest, MicrobenchProfile};
use hesplit::matrix::Matrix;
use hesplit::nn::{backward, forward, init_layers, Activation, ActivationSpec, Layer, Loss};
use hesplit::packing::{
    choose_packing, client_fold, count_rotations, encrypt_layout, matmat_rotsum, matvec_one_level,
    pack_columns_rotsum, pack_matrix_batch, pack_matrix_scalar, padded_len, replicate_row, PackingChoice,
    RowOperand,
};
use hesplit::protocol::monolith::train_monolith;
use hesplit::protocol::{refresh_needed, run_local, LocalRun, SplitPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const ROUND_TRIP_TOL: f64 = 1e-4;
const OP_TOL: f64 = 1e-3;
const PACKING_TOL: f64 = 1e-2;
const EQUIVALENCE_TOL: f64 = 1e-9;
const GRADIENT_TOL: f64 = 1e-4;
const BCW_MIN_ACCURACY: f64 = 0.95;
const MNIST_MIN_ACCURACY: f64 = 0.90;
const IDEAL_MODEL1_MB: f64 = 2.44140625;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fast() -> bool {
    std::env::var("HESPLIT_ACCEPTANCE_FAST").is_ok_and(|v| !v.is_empty() && v != "0")
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_vec(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn set2_ckks() -> Backend {
    let ctx = Arc::new(CkksContext::new(CryptoParams::set2()));
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let keys = keygen(&ctx, &power_of_two_steps(ctx.slots()), &mut rng).expect("keygen");
    Backend::ckks(ctx, &keys)
}

fn set2_sim(noise: NoiseModel) -> Backend {
    let p = CryptoParams::set2();
    let steps = power_of_two_steps(p.slot_count());
    Backend::noise_sim(p, noise, &steps)
}

fn he_correctness(backend: &Backend) -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let slots = backend.slots();
    let mut round_trip: f64 = 0.0;
    for _ in 0..1000 {
        let v = random_vec(&mut rng, slots);
        let ct = backend.encrypt(&v, None, &mut rng).unwrap();
        round_trip = round_trip.max(max_err(&backend.decrypt(&ct).unwrap(), &v));
    }
    let mut ops = [0.0f64; 4];
    for _ in 0..20 {
        let v = random_vec(&mut rng, slots);
        let w = random_vec(&mut rng, slots);
        let a = backend.encrypt(&v, None, &mut rng).unwrap();
        let b = backend.encrypt(&w, None, &mut rng).unwrap();
        let sum: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x + y).collect();
        let prod: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x * y).collect();
        let dec = |c| backend.decrypt(&c).unwrap();
        ops[0] = ops[0].max(max_err(&dec(backend.add(&a, &b).unwrap()), &sum));
        ops[1] = ops[1].max(max_err(&dec(backend.mul_plain(&a, &w, None).unwrap()), &prod));
        ops[2] = ops[2].max(max_err(&dec(backend.mul_ct(&a, &b).unwrap()), &prod));
        let step = rng.random_range(1..slots);
        let rotated: Vec<f64> = (0..slots).map(|i| v[(i + step) % slots]).collect();
        ops[3] = ops[3].max(max_err(&dec(backend.rotate(&a, step).unwrap().0), &rotated));
    }
    let secs = t.elapsed().as_secs_f64();
    let worst_op = ops.iter().cloned().fold(0.0, f64::max);
    check(
        round_trip < ROUND_TRIP_TOL && worst_op < OP_TOL && secs < 120.0,
        format!(
            "1000 round trips max err {round_trip:.2e} (< {ROUND_TRIP_TOL:.0e}); add {:.2e}, mul_plain {:.2e}, \
             mul_ct {:.2e}, rotate {:.2e} (< {OP_TOL:.0e}); {secs:.1}s (< 120s)",
            ops[0], ops[1], ops[2], ops[3]
        ),
    )
}

/// Error of one random instance of `scheme` (0 batch, 1 scalar, 2 rotsum)
/// with every dimension in `1..=max_dim`.
fn packing_instance(backend: &Backend, rng: &mut ChaCha20Rng, scheme: usize, max_dim: usize, encrypted_rows: bool) -> f64 {
    let slots = backend.slots();
    let r = rng.random_range(1..=max_dim);
    let c = rng.random_range(1..=max_dim);
    match scheme {
        0 | 1 => {
            let w = random_matrix(rng, r, c);
            let x = random_vec(rng, c);
            let want = w.matvec(&x).unwrap();
            if scheme == 0 {
                let pw = pack_matrix_batch(&w, backend, None, rng).unwrap();
                let dec = backend.decrypt(&matvec_one_level(&pw, &x, backend).unwrap()[0]).unwrap();
                let (cpc, p) = (pw.meta.cols_per_ct, pw.meta.padded_col_len);
                max_err(&client_fold(&dec[..cpc * p], cpc, p, r).unwrap(), &want)
            } else {
                let pw = pack_matrix_scalar(&w, backend, None, rng).unwrap();
                let dec = backend.decrypt(&matvec_one_level(&pw, &x, backend).unwrap()[0]).unwrap();
                max_err(&dec[..r], &want)
            }
        }
        _ => {
            let k = rng.random_range(1..=max_dim);
            let a = random_matrix(rng, r, k);
            let b = random_matrix(rng, k, c);
            let pw = encrypt_layout(&pack_columns_rotsum(&b, slots).unwrap(), backend, rng).unwrap();
            let result = if encrypted_rows {
                let p = pw.meta.padded_col_len;
                let rows: Vec<_> = (0..r)
                    .map(|i| backend.encrypt(&replicate_row(a.row(i), p, slots, 0), None, rng).unwrap())
                    .collect();
                matmat_rotsum(RowOperand::Encrypted { rows: &rows, cols: k }, &pw, backend).unwrap()
            } else {
                matmat_rotsum(RowOperand::Plain(&a), &pw, backend).unwrap()
            };
            result.extract(backend).unwrap().max_abs_diff(&a.matmul(&b).unwrap())
        }
    }
}

fn toy_layout() -> Result<String, String> {
    let backend = set2_sim(NoiseModel::exact());
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let a = Matrix::from_fn(3, 3, |i, j| (i * 3 + j + 1) as f64 * 0.1);
    let b = Matrix::from_fn(3, 5, |i, j| (i * 5 + j + 1) as f64 * 0.01);
    let layout = pack_columns_rotsum(&b, 8).map_err(|e| e.to_string())?;
    let col = |j: usize| (0..3).map(|i| b.get(i, j)).collect::<Vec<_>>();
    let expected = [
        [col(0), vec![0.0], col(1), vec![0.0]].concat(),
        [col(2), vec![0.0], col(3), vec![0.0]].concat(),
        [col(4), vec![0.0; 5]].concat(),
    ];
    if layout.vectors.len() != 3 || layout.vectors.iter().zip(&expected).any(|(v, e)| v[..8] != e[..]) {
        return Err(format!("layout {:?}", layout.vectors));
    }
    let pw = encrypt_layout(&layout, &backend, &mut rng).map_err(|e| e.to_string())?;
    let r = matmat_rotsum(RowOperand::Plain(&a), &pw, &backend).map_err(|e| e.to_string())?;
    let first = backend.decrypt(&r.ciphertexts[0]).map_err(|e| e.to_string())?;
    let want = a.matmul(&b).unwrap();
    let marks: Vec<_> = r.marks.iter().filter(|m| m.ct == 0).map(|m| (m.slot, m.row, m.col)).collect();
    let rounds = r.rotations / (3 * 3);
    if marks != [(0, 0, 0), (4, 0, 1)]
        || rounds != 2
        || (first[0] - want.get(0, 0)).abs() > 1e-12
        || (first[4] - want.get(0, 1)).abs() > 1e-12
    {
        return Err(format!("marks {marks:?}, rotate-adds {rounds}, slots {:?}", &first[..8]));
    }
    Ok("3x3x(3x5) toy: layout and marked slots 0, 4 exact".into())
}

fn packing_equivalence(ckks: &Backend) -> Verdict {
    let t = Instant::now();
    let sim = set2_sim(NoiseModel::for_params(&CryptoParams::set2()));
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut worst = [0.0f64; 3];
    for i in 0..200 {
        let scheme = i % 3;
        worst[scheme] = worst[scheme].max(packing_instance(&sim, &mut rng, scheme, 64, i % 2 == 1));
    }
    let mut worst_ckks = [0.0f64; 3];
    for i in 0..18 {
        let scheme = i % 3;
        let max_dim = if scheme == 2 { 16 } else { 64 };
        worst_ckks[scheme] = worst_ckks[scheme].max(packing_instance(ckks, &mut rng, scheme, max_dim, i % 2 == 1));
    }
    let toy = toy_layout();
    let secs = t.elapsed().as_secs_f64();
    let all = worst.iter().chain(&worst_ckks).cloned().fold(0.0, f64::max);
    let toy_text = toy.as_ref().map_or_else(|e| format!("toy FAILED: {e}"), |s| s.clone());
    check(
        all < PACKING_TOL && toy.is_ok() && secs < 300.0,
        format!(
            "200 instances <= 64x64 on Set 2 noise-sim: batch {:.2e}, scalar {:.2e}, rotsum {:.2e}; \
             18 on Set 2 ckks: batch {:.2e}, scalar {:.2e}, rotsum(<= 16) {:.2e} (< {PACKING_TOL:.0e}); {toy_text}; {secs:.1}s (< 300s)",
            worst[0], worst[1], worst[2], worst_ckks[0], worst_ckks[1], worst_ckks[2]
        ),
    )
}

/// Rotations of one per-sample pass: for each layer pair, a row of length
/// `l_{i+1}` against the `l_{i+1} x pad(l_i)` weight block.
fn instrumented_rotations(sizes: &[usize], width: usize, backend: &Backend, rng: &mut ChaCha20Rng) -> usize {
    sizes
        .windows(2)
        .map(|pair| {
            let (a, b) = (pair[0], pair[1]);
            let row = random_matrix(rng, 1, b);
            let w = random_matrix(rng, b, padded_len(a));
            let pw = encrypt_layout(&pack_columns_rotsum(&w, width).unwrap(), backend, rng).unwrap();
            matmat_rotsum(RowOperand::Plain(&row), &pw, backend).unwrap().rotations
        })
        .sum()
}

fn rotation_counts() -> Verdict {
    let shapes: &[(&[usize], usize)] = &[
        (&[784, 128], 4096),
        (&[784, 128, 32], 4096),
        (&[128, 32], 4096),
        (&[9, 128], 4096),
        (&[9, 128, 32], 4096),
        (&[1000, 500], 4096),
        (&[300, 200, 100], 4096),
        (&[64, 64], 1024),
        (&[3, 3], 8),
        (&[3, 5], 8),
        (&[5, 3], 8),
        (&[7, 7, 7], 64),
        (&[15, 31], 256),
        (&[31, 15], 256),
        (&[100, 50, 20], 1024),
        (&[200, 100, 50, 25], 2048),
        (&[784, 128, 128, 128], 4096),
        (&[12, 12], 128),
        (&[40, 2000], 4096),
        (&[2047, 16], 4096),
        (&[16, 8, 4, 2], 16),
        (&[63, 63], 64),
        (&[255, 127, 63], 1024),
        (&[4095, 100], 4096),
    ];
    let backend = set2_sim(NoiseModel::exact());
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut mismatches = Vec::new();
    for &(sizes, width) in shapes {
        let predicted = count_rotations(sizes, width).exact;
        let measured = instrumented_rotations(sizes, width, &backend, &mut rng);
        if predicted != measured as f64 {
            mismatches.push(format!("{sizes:?}@{width}: predicted {predicted}, measured {measured}"));
        }
    }
    check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{} shape configurations, predicted == instrumented (784x128 @ 4096 -> 512)", shapes.len())
        } else {
            mismatches.join("; ")
        },
    )
}

fn synth_config(sizes: &[usize], split: usize, samples: usize, epochs: usize, batch: usize, noise: &str) -> Config {
    let json = format!(
        r#"{{
            "seed": 5,
            "model": {{ "layer_sizes": {sizes:?}, "split": {split} }},
            "crypto": {{ "backend": "noise-sim", "ring_size_log": 13, "log_qp": 218, "scale_log": 30 {noise} }},
            "protocol": {{ "epochs": {epochs}, "batch_size": {batch}, "learning_rate": 1.0 }},
            "data": {{ "source": "synth", "samples": {samples}, "features": {}, "classes": {} }}
        }}"#,
        sizes[0],
        sizes[sizes.len() - 1]
    );
    Config::from_json(&json).expect("valid config")
}

fn run(cfg: &Config) -> (Dataset, LocalRun) {
    let data = cfg.load_dataset().expect("dataset");
    let r = run_local(cfg, &data).expect("split run");
    (data, r)
}

fn communication() -> Verdict {
    let ideal = ideal_traffic_mb(10000, 128, 4096, 0.0078125);
    let cfg = Config::load(&repo_root().join("configs/model1_estimate.json")).expect("model 1 estimate config");
    let req = EstimateRequest::from_config(&cfg, cfg.estimator.samples.unwrap_or(10000)).unwrap();
    let params = cfg.crypto.params().unwrap();
    let report = estimate_epoch(&req, &MicrobenchProfile::uniform(&params, cfg.crypto.backend, 1e-3)).unwrap();
    let reported = report.splits.iter().find(|s| s.split == 1).map_or(f64::NAN, |s| s.ideal_traffic_mb);
    let formula_ok = ideal == IDEAL_MODEL1_MB && reported == IDEAL_MODEL1_MB;
    let formula = format!("ideal traffic {ideal} MB, estimator report {reported} MB (== {IDEAL_MODEL1_MB})");
    if fast() {
        return Verdict::Skip(format!("{formula}; live Model-1 epoch skipped"));
    }
    let t = Instant::now();
    let cfg = synth_config(&[784, 128, 32, 10], 1, 10000, 1, 64, "");
    let (data, r) = run(&cfg);
    let p = cfg.protocol.clone();
    let plan = SplitPlan::new(&cfg.model.layer_sizes, 1, 4096, p.batch_size, p.packing_threshold).unwrap();
    let expected = (data.len() * padded_len(128)).div_ceil(4096);
    let measured = r.server.epochs[0].fwd_out_cts;
    check(
        formula_ok && measured == expected && plan.fwd_out_per_epoch(data.len()) == expected,
        format!(
            "{formula}; live Model-1 n=1 epoch (10000 samples, batch 64): {measured} FWD_OUT ciphertexts \
             == ceil(10000*256/4096) = {expected}; {:.0}s",
            t.elapsed().as_secs_f64()
        ),
    )
}

fn weight_diff(a: &[Layer], b: &[Layer]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let bias = max_err(&x.bias, &y.bias);
            x.weights.max_abs_diff(&y.weights).max(bias)
        })
        .fold(0.0, f64::max)
}

fn monolith_equivalence() -> Verdict {
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for split in [1, 2] {
        let cfg = synth_config(&[10, 128, 32, 2], split, 200, 2, 20, r#", "sim_noise": 0.0"#);
        let (data, r) = run(&cfg);
        let mono = train_monolith(&cfg, &data).unwrap();
        let diff = weight_diff(&mono.layers, &r.client.layers);
        worst = worst.max(diff);
        parts.push(format!("n={split}: {diff:.2e}"));
    }
    check(
        worst < EQUIVALENCE_TOL,
        format!(
            "[10]x128x32x[2], 200 synthetic samples, 2 epochs, exact simulator, max weight diff {} (< {EQUIVALENCE_TOL:.0e})",
            parts.join(", ")
        ),
    )
}

/// Final-epoch running accuracy and accuracy of the returned model on the
/// training set.
fn accuracies(data: &Dataset, r: &LocalRun) -> (f64, f64) {
    let running = r.client.epochs.last().map_or(0.0, |e| e.accuracy);
    let out = forward(&r.client.layers, &data.features).unwrap();
    (running, hesplit::nn::accuracy(out.output(), &data.classes))
}

fn desk_accuracy() -> Verdict {
    if fast() {
        return Verdict::Skip("BCW (ckks) and MNIST-5k (noise-sim) training runs skipped".into());
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (file, min_acc, max_secs) in [("configs/bcw.json", BCW_MIN_ACCURACY, 600.0), ("configs/mnist5k.json", MNIST_MIN_ACCURACY, 3600.0)] {
        let cfg = Config::load(&repo_root().join(file)).expect("config");
        let t = Instant::now();
        let (data, r) = run(&cfg);
        let secs = t.elapsed().as_secs_f64();
        let (running, model) = accuracies(&data, &r);
        ok &= model >= min_acc && secs < max_secs;
        parts.push(format!(
            "{file} ({} backend, {} samples): train accuracy {:.2}% (last-epoch running {:.2}%, >= {:.0}%), {secs:.0}s (< {max_secs:.0}s)",
            cfg.crypto.backend.name(),
            data.len(),
            100.0 * model,
            100.0 * running,
            100.0 * min_acc
        ));
    }
    check(ok, parts.join("; "))
}

fn refresh_rule() -> Verdict {
    let rule = refresh_needed(Some(7), 3, 4);
    let cfg = synth_config(&[8, 16, 8, 2], 1, 300, 10, 30, "");
    let (_, r) = run(&cfg);
    let level_budget = cfg.crypto.params().unwrap().level_budget();
    let period = cfg.refresh_period(level_budget);
    let per_epoch = 300usize.div_ceil(30);
    let expected: Vec<usize> = (0..10)
        .map(|e| (e * per_epoch + 1..=(e + 1) * per_epoch).filter(|k| period > 0 && k % period == 0).count())
        .collect();
    let scheduled: Vec<usize> = r.server.epochs.iter().map(|e| e.refreshes.scheduled).collect();
    let other: usize = r.server.epochs.iter().map(|e| e.refreshes.in_pass + e.refreshes.relayout).sum();
    check(
        rule && scheduled == expected && other == 0,
        format!(
            "(d=7, n=3, L=4) triggers: {rule}; n=1 10-epoch run: scheduled {scheduled:?} (every {period} updates, \
             expected {expected:?}), in-pass + relayout refreshes {other}"
        ),
    )
}

fn gradient_worst(act: &Activation) -> f64 {
    let mut worst: f64 = 0.0;
    let loss = Loss::Mse;
    for point in 0..10u64 {
        let mut layers = init_layers(&[5, 4, 3], &[act.clone(), act.clone()], point).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(100 + point);
        for l in &mut layers {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let x = Matrix::from_fn(6, 5, |_, _| rng.random_range(-2.0..2.0));
        let y = Matrix::from_fn(6, 3, |i, j| ((i + j) % 3 == 0) as u8 as f64);
        let loss_of = |m: &[Layer]| loss.value(forward(m, &x).unwrap().output(), &y).unwrap();
        let trace = forward(&layers, &x).unwrap();
        let grads = backward(&layers, &trace, &loss.gradient(trace.output(), &y).unwrap()).unwrap();
        let h = 1e-5;
        for l in 0..layers.len() {
            let (rows, cols) = layers[l].weights.shape();
            for k in 0..rows * cols + rows {
                let at = |delta: f64| {
                    let mut m = layers.clone();
                    if k < rows * cols {
                        m[l].weights.data_mut()[k] += delta;
                    } else {
                        m[l].bias[k - rows * cols] += delta;
                    }
                    loss_of(&m)
                };
                let numeric = (at(h) - at(-h)) / (2.0 * h);
                let analytic =
                    if k < rows * cols { grads.weights[l].data()[k] } else { grads.biases[l][k - rows * cols] };
                worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3));
            }
        }
    }
    worst
}

fn gradient_checks() -> Verdict {
    let approx = ActivationSpec::ApproxSigmoid { degree: 7, lo: -15.0, hi: 15.0 }.resolve().unwrap();
    let sig = gradient_worst(&Activation::Sigmoid);
    let poly = gradient_worst(&approx);
    check(
        sig < GRADIENT_TOL && poly < GRADIENT_TOL,
        format!("10 random points each: sigmoid rel err {sig:.2e}, approx sigmoid (degree 7) {poly:.2e} (< {GRADIENT_TOL:.0e})"),
    )
}

fn chooser() -> Verdict {
    let cases = [(1517, 4096, PackingChoice::Batch), (1518, 4096, PackingChoice::Scalar), (10, 27, PackingChoice::Batch)];
    let got: Vec<_> = cases.iter().map(|&(l, s, _)| choose_packing(l, s, 2.7)).collect();
    let ok = cases.iter().zip(&got).all(|(c, g)| c.2 == *g);
    check(
        ok,
        format!(
            "4096/1517 = 2.700 -> {:?}, 4096/1518 = 2.698 -> {:?}, 27/10 = 2.7 exactly -> {:?}",
            got[0], got[1], got[2]
        ),
    )
}

type Criterion<'a> = Box<dyn Fn() -> Verdict + 'a>;

fn main() {
    let t = Instant::now();
    let ckks = set2_ckks();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("HE correctness (Set 2)", Box::new(|| he_correctness(&ckks))),
        ("packing oracle equivalence", Box::new(|| packing_equivalence(&ckks))),
        ("rotation-count exactness", Box::new(rotation_counts)),
        ("communication formula", Box::new(communication)),
        ("protocol/monolith equivalence", Box::new(monolith_equivalence)),
        ("desk-scale accuracy", Box::new(desk_accuracy)),
        ("refresh-trigger rule", Box::new(refresh_rule)),
        ("gradient checks", Box::new(gradient_checks)),
        ("packing chooser threshold", Box::new(chooser)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match f() {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {} {name}: {detail} [{:.1}s]", i + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {} failed, {:.0}s total", failed, criteria.len(), t.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
