//! Plaintext reference training with the same initialization, batches and
//! activations as the split run.

use crate::config::Config;
use crate::data::Dataset;
use crate::error::Result;
use crate::nn::{accuracy, backward, forward, init_layers, sgd_update, Layer};

use super::messages::EpochReport;

#[derive(Clone, Debug)]
pub struct MonolithRun {
    pub layers: Vec<Layer>,
    pub epochs: Vec<EpochReport>,
}

pub fn train_monolith(cfg: &Config, data: &Dataset) -> Result<MonolithRun> {
    let mut layers = init_layers(&cfg.model.layer_sizes, &cfg.activations()?, cfg.seed)?;
    let loss = cfg.model.loss;
    let lr = cfg.protocol.learning_rate;
    let mut epochs = Vec::with_capacity(cfg.protocol.epochs);
    for epoch in 0..cfg.protocol.epochs {
        let (mut loss_sum, mut hits) = (0.0, 0.0);
        for (x, y, labels) in data.batches(cfg.protocol.batch_size) {
            let b = x.rows() as f64;
            let trace = forward(&layers, &x)?;
            loss_sum += loss.value(trace.output(), &y)? * b;
            hits += accuracy(trace.output(), labels) * b;
            let grads = backward(&layers, &trace, &loss.gradient(trace.output(), &y)?)?;
            sgd_update(&mut layers, &grads, lr)?;
        }
        let samples = data.len();
        epochs.push(EpochReport {
            epoch,
            samples,
            loss: loss_sum / samples.max(1) as f64,
            accuracy: hits / samples.max(1) as f64,
        });
    }
    Ok(MonolithRun { layers, epochs })
}
