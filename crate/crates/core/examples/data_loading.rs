//! Loading the bundled datasets and generating synthetic blobs.
//!
//! Run with `cargo run --release --example data_loading`.

use std::path::Path;

use hesplit::data::{load_csv, load_idx, synth, CsvSchema, SynthConfig};

fn main() -> hesplit::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let bcw = load_csv(&dir.join("bcw.csv"), &CsvSchema::bcw())?;
    println!("bcw: {} samples, {} features, {} classes", bcw.len(), bcw.feature_count(), bcw.class_count());

    let mnist = load_idx(
        &dir.join("mnist5k-images-idx3-ubyte.gz"),
        &dir.join("mnist5k-labels-idx1-ubyte.gz"),
    )?;
    println!("mnist5k: {} samples, {} features, {} classes", mnist.len(), mnist.feature_count(), mnist.class_count());

    let blobs = synth(&SynthConfig { samples: 200, features: 10, classes: 3, separation: 6.0 }, 7)?;
    let (train, test) = blobs.shuffled(7).split(0.2, 7);
    println!("synthetic: {} train, {} test", train.len(), test.len());
    for (x, y, labels) in train.batches(64).take(2) {
        println!("batch {}x{} features, {}x{} targets, first labels {:?}", x.rows(), x.cols(), y.rows(), y.cols(), &labels[..4]);
    }
    Ok(())
}
