//! Split training in one process, compared with plaintext training.
//!
//! Run with `cargo run --release --example split_training`.

use hesplit::config::Config;
use hesplit::protocol::monolith::train_monolith;
use hesplit::protocol::run_local;

fn main() -> hesplit::Result<()> {
    let cfg = Config::from_json(
        r#"{
            "seed": 3,
            "model": {
                "layer_sizes": [8, 16, 8, 2],
                "split": 2,
                "server_activation": { "kind": "approx_sigmoid", "degree": 7, "lo": -8.0, "hi": 8.0 }
            },
            "crypto": { "backend": "noise-sim", "ring_size_log": 13, "log_qp": 218, "scale_log": 30 },
            "protocol": { "epochs": 10, "batch_size": 30, "learning_rate": 8.0 },
            "data": { "source": "synth", "samples": 300, "features": 8, "classes": 2 }
        }"#,
    )?;
    let data = cfg.load_dataset()?;
    let run = run_local(&cfg, &data)?;
    let mono = train_monolith(&cfg, &data)?;

    println!("epoch  split loss  split acc  plain loss  plain acc  rotations  refreshes");
    for ((s, c), m) in run.server.epochs.iter().zip(&run.client.epochs).zip(&mono.epochs) {
        println!(
            "{:>5}  {:>10.5}  {:>9.3}  {:>10.5}  {:>9.3}  {:>9}  {:>9}",
            s.epoch,
            c.loss,
            c.accuracy,
            m.loss,
            m.accuracy,
            s.rotations,
            s.refreshes.total()
        );
    }
    let diff = mono
        .layers
        .iter()
        .zip(&run.client.layers)
        .map(|(a, b)| a.weights.max_abs_diff(&b.weights))
        .fold(0.0, f64::max);
    println!("max weight difference to plaintext training: {diff:.3e}");
    println!(
        "traffic: client sent {} bytes, received {} bytes",
        run.client.traffic.bytes_sent, run.client.traffic.bytes_received
    );
    Ok(())
}
