//! Split-point estimate for a 784 x 128 x 32 x 10 network.
//!
//! Run with `cargo run --release --example estimator`. Uses a short
//! microbenchmark of the simulator backend; pass `ckks` as the first
//! argument to time the real scheme instead.

use hesplit::backend::BackendKind;
use hesplit::config::Config;
use hesplit::estimator::{bench_backend, estimate_epoch, ideal_traffic_mb, run_microbench, EstimateRequest, SystemClock};

fn main() -> hesplit::Result<()> {
    let kind: BackendKind = std::env::args().nth(1).unwrap_or_else(|| "noise-sim".into()).parse()?;
    let cfg = Config::from_json(
        r#"{
            "model": { "layer_sizes": [784, 128, 32, 10], "split": 1 },
            "protocol": { "batch_size": 64 },
            "data": { "source": "synth", "samples": 10000, "features": 784, "classes": 10 },
            "estimator": { "desired_time": 3600.0, "split_range": [1, 2] }
        }"#,
    )?;
    let params = cfg.crypto.params()?;
    let backend = bench_backend(kind, &params, 1)?;
    let profile = run_microbench(&backend, 10, &mut SystemClock::default())?;
    println!("rotation median {:.3} ms on {}", profile.t_rot.median * 1e3, kind.name());

    let req = EstimateRequest::from_config(&cfg, 10000)?;
    let report = estimate_epoch(&req, &profile)?;
    print!("{}", report.to_table());
    println!("idealized traffic for one epoch: {} MB", ideal_traffic_mb(10000, 128, 4096, 0.0078125));
    Ok(())
}
