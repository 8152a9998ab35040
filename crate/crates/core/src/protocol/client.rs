//! Client role: key owner, label owner, runs the plaintext tail of the
//! network and serves refresh requests.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::layout::Arrangement;
use super::messages::*;
use super::plan::SplitPlan;
use super::server::with_bias_row;
use super::wire::{Channel, MsgType, TrafficStats};
use super::{encode_public, RefreshCounts};
use crate::backend::{Backend, BackendKind, HeValue};
use crate::ckks::{keygen, CkksContext};
use crate::config::Config;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{accuracy, backward, forward, init_layers, sgd_update, Activation, Layer};

#[derive(Clone, Debug, Default)]
pub struct ClientReport {
    pub epochs: Vec<EpochReport>,
    /// Full trained model: decrypted server layers followed by the client's.
    pub layers: Vec<Layer>,
    pub traffic: TrafficStats,
    pub refreshes: RefreshCounts,
}

struct Client<'a> {
    cfg: &'a Config,
    data: &'a Dataset,
    plan: SplitPlan,
    backend: Backend,
    /// Activation of the last server layer, applied here.
    boundary: Activation,
    layers: Vec<Layer>,
    rng: ChaCha20Rng,
    loss_sum: f64,
    hits: f64,
    seen: usize,
    refreshes: RefreshCounts,
}

/// Builds the key-holding backend for the configured scheme.
pub fn client_backend(cfg: &Config, steps: &[usize], seed: u64) -> Result<Backend> {
    let params = cfg.crypto.params()?;
    match cfg.crypto.backend {
        BackendKind::Ckks => {
            let ctx = Arc::new(CkksContext::new(params));
            let keys = keygen(&ctx, steps, &mut ChaCha20Rng::seed_from_u64(seed))?;
            Ok(Backend::ckks(ctx, &keys))
        }
        BackendKind::NoiseSim => {
            let noise = cfg.crypto.noise_model(&params);
            Ok(Backend::noise_sim(params, noise, steps))
        }
    }
}

pub fn run_client(cfg: &Config, data: &Dataset, mut ch: Channel) -> Result<ClientReport> {
    let result = drive(cfg, data, &mut ch);
    match result {
        Ok(mut report) => {
            report.traffic = ch.stats.clone();
            Ok(report)
        }
        Err(e) => {
            let _ = ch.send(MsgType::Shutdown, e.to_string().into_bytes());
            Err(e)
        }
    }
}

fn drive(cfg: &Config, data: &Dataset, ch: &mut Channel) -> Result<ClientReport> {
    let digest = cfg.digest();
    ch.send(MsgType::Hello, digest.to_vec())?;
    if ch.expect(MsgType::Hello)? != digest {
        return Err(Error::Protocol("server echoed a different config digest".into()));
    }

    let params = cfg.crypto.params()?;
    let plan = SplitPlan::new(
        &cfg.model.layer_sizes,
        cfg.model.split,
        params.slot_count(),
        cfg.protocol.batch_size,
        cfg.protocol.packing_threshold,
    )?;
    let steps = plan.rotation_steps();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x00c1_1e47);
    let backend = client_backend(cfg, &steps, rng.next_u64())?;
    ch.send(MsgType::PubKeys, encode_public(&backend, &steps)?)?;

    let ack: WeightsAck = decode_json(&ch.expect(MsgType::EncWeightsAck)?)?;
    if ack.layers != plan.layers {
        return Err(Error::Protocol("server layer shapes differ from the local plan".into()));
    }

    let n = plan.split();
    let activations = cfg.activations()?;
    let layers = init_layers(&cfg.model.layer_sizes, &activations, cfg.seed)?.split_off(n);
    let mut c = Client {
        cfg,
        data,
        plan,
        backend,
        boundary: activations[n - 1].clone(),
        layers,
        rng,
        loss_sum: 0.0,
        hits: 0.0,
        seen: 0,
        refreshes: RefreshCounts::default(),
    };
    let mut report = ClientReport::default();

    loop {
        let frame = ch.recv()?;
        match frame.kind {
            MsgType::Data => c.send_inputs(ch, &frame.payload)?,
            MsgType::FwdOut => c.train_tail(ch, &frame.payload)?,
            MsgType::RefreshReq => c.refresh(ch, &frame.payload)?,
            MsgType::EpochDone => {
                let req: EpochReport = decode_json(&frame.payload)?;
                let samples = c.seen.max(1) as f64;
                let r = EpochReport {
                    epoch: req.epoch,
                    samples: c.seen,
                    loss: c.loss_sum / samples,
                    accuracy: c.hits / samples,
                };
                ch.send(MsgType::EpochDone, encode_json(&r)?)?;
                report.epochs.push(r);
                (c.loss_sum, c.hits, c.seen) = (0.0, 0.0, 0);
            }
            MsgType::Shutdown => {
                let (farewell, cts): (Farewell, Vec<HeValue>) = decode_bundle(&c.backend, &frame.payload)
                    .map_err(|_| {
                        Error::Protocol(format!("peer aborted: {}", String::from_utf8_lossy(&frame.payload)))
                    })?;
                report.layers = c.decrypt_model(&farewell, &cts, &activations)?;
                report.layers.extend(c.layers);
                report.refreshes = c.refreshes;
                return Ok(report);
            }
            other => return Err(Error::Protocol(format!("unexpected {other:?} frame"))),
        }
    }
}

impl Client<'_> {
    fn width(&self) -> usize {
        self.plan.width
    }

    fn encrypt_all(&mut self, vectors: &[Vec<f64>], scale: f64) -> Result<Vec<HeValue>> {
        let seeds: Vec<u64> = vectors.iter().map(|_| self.rng.next_u64()).collect();
        let backend = &self.backend;
        vectors
            .par_iter()
            .zip(seeds)
            .map(|(v, seed)| backend.encrypt(v, Some(scale), &mut ChaCha20Rng::seed_from_u64(seed)))
            .collect()
    }

    fn decrypt_all(&self, cts: &[HeValue]) -> Result<Vec<Vec<f64>>> {
        cts.par_iter().map(|c| self.backend.decrypt(c)).collect()
    }

    fn batch_rows(&self, batch: usize, samples: usize) -> Result<usize> {
        let first = batch * self.cfg.protocol.batch_size;
        if first + samples > self.data.len() {
            return Err(Error::Protocol(format!("batch {batch} runs past the {} samples", self.data.len())));
        }
        Ok(first)
    }

    fn send_inputs(&mut self, ch: &mut Channel, payload: &[u8]) -> Result<()> {
        let req: DataRequest = decode_json(payload)?;
        let expected = self.plan.input_arrangement(0, arrangement_samples(&req.arrangement)?);
        if req.arrangement != expected {
            return Err(Error::Protocol("server asked for inputs in an unexpected arrangement".into()));
        }
        let samples = arrangement_samples(&req.arrangement)?;
        let first = self.batch_rows(req.batch, samples)?;
        let x = self.data.features.slice_rows(first, samples);
        let m = match req.arrangement {
            Arrangement::Packed { .. } => with_bias_row(&x),
            _ => x.transpose(),
        };
        let vectors = req.arrangement.scatter(&m, self.width())?;
        let cts = self.encrypt_all(&vectors, self.backend.default_scale())?;
        ch.send(MsgType::Data, encode_bundle(&self.backend, &req, &cts)?)
    }

    /// Decrypts the server output, runs the client layers, and returns the
    /// scaled boundary delta.
    fn train_tail(&mut self, ch: &mut Channel, payload: &[u8]) -> Result<()> {
        let (h, cts): (ForwardHeader, Vec<HeValue>) = decode_bundle(&self.backend, payload)?;
        let samples = arrangement_samples(&h.arrangement)?;
        if h.arrangement != self.plan.output_arrangement(samples) {
            return Err(Error::Protocol("server output has an unexpected arrangement".into()));
        }
        let first = self.batch_rows(h.batch, samples)?;
        let z = h.arrangement.gather(&self.decrypt_all(&cts)?, self.width())?.transpose();
        let y = self.data.labels.slice_rows(first, samples);
        let labels = &self.data.classes[first..first + samples];

        let mut o = z.clone();
        o.data_mut().iter_mut().for_each(|v| *v = self.boundary.apply(*v));
        let trace = forward(&self.layers, &o)?;
        let loss = self.cfg.model.loss;
        self.loss_sum += loss.value(trace.output(), &y)? * samples as f64;
        self.hits += accuracy(trace.output(), labels) * samples as f64;
        self.seen += samples;
        let grads = backward(&self.layers, &trace, &loss.gradient(trace.output(), &y)?)?;
        let lr = self.cfg.protocol.learning_rate;
        let mut delta = grads.input_grad.clone();
        for (d, &zv) in delta.data_mut().iter_mut().zip(z.data()) {
            *d *= self.boundary.derivative(zv) * lr;
        }
        sgd_update(&mut self.layers, &grads, lr)?;

        let last = *self.plan.last();
        let (vectors, header, scale) = match &h.inputs {
            Some(values) => {
                let x = Matrix::from_vec(samples, last.inputs(), values.clone())?;
                let g = delta.transpose().matmul(&x)?;
                let bias: Vec<f64> = (0..last.outputs()).map(|r| delta.column(r).iter().sum()).collect();
                let header = GradientHeader { batch: h.batch, arrangement: Arrangement::Raw { count: last.ct_count() }, weight_gradient: true };
                (last.encode(&g, &bias, self.width())?, header, self.backend.default_scale())
            }
            None => {
                let header = GradientHeader { batch: h.batch, arrangement: h.arrangement, weight_gradient: false };
                (h.arrangement.scatter(&delta.transpose(), self.width())?, header, h.grad_scale)
            }
        };
        let cts = self.encrypt_all(&vectors, scale)?;
        ch.send(MsgType::BoundaryGrad, encode_bundle(&self.backend, &header, &cts)?)
    }

    fn refresh(&mut self, ch: &mut Channel, payload: &[u8]) -> Result<()> {
        let (req, cts): (RefreshRequest, Vec<HeValue>) = decode_bundle(&self.backend, payload)?;
        self.refreshes.record(req.reason);
        let width = self.width();
        let mut offset = 0;
        let mut counts = Vec::with_capacity(req.items.len());
        let mut out = Vec::new();
        for item in &req.items {
            let n = match item.source {
                Arrangement::Raw { count } => count,
                other => other.ct_count(width),
            };
            let src = cts
                .get(offset..offset + n)
                .ok_or_else(|| Error::Protocol("refresh request is missing ciphertexts".into()))?;
            offset += n;
            let plain = self.decrypt_all(src)?;
            let mut item_counts = Vec::with_capacity(item.targets.len());
            for t in &item.targets {
                let vectors = match (item.source, t.arrangement) {
                    (Arrangement::Raw { .. }, Arrangement::Raw { count }) if count == n => plain.clone(),
                    (Arrangement::Raw { .. }, _) | (_, Arrangement::Raw { .. }) => {
                        return Err(Error::Protocol("raw refresh must keep the ciphertext count".into()))
                    }
                    (source, target) => target.scatter(&source.gather(&plain, width)?, width)?,
                };
                item_counts.push(vectors.len());
                out.extend(self.encrypt_all(&vectors, t.scale)?);
            }
            counts.push(item_counts);
        }
        if offset != cts.len() {
            return Err(Error::Protocol("refresh request has extra ciphertexts".into()));
        }
        ch.send(MsgType::RefreshResp, encode_bundle(&self.backend, &counts, &out)?)
    }

    fn decrypt_model(&self, farewell: &Farewell, cts: &[HeValue], activations: &[Activation]) -> Result<Vec<Layer>> {
        if farewell.layers != self.plan.layers {
            return Err(Error::Protocol("final weights have unexpected shapes".into()));
        }
        let plain = self.decrypt_all(cts)?;
        let mut offset = 0;
        let mut out = Vec::new();
        for (shape, act) in farewell.layers.iter().zip(activations) {
            let k = shape.ct_count();
            let part = plain
                .get(offset..offset + k)
                .ok_or_else(|| Error::Protocol("final weights are incomplete".into()))?;
            offset += k;
            let (weights, bias) = shape.decode(part)?;
            out.push(Layer { weights, bias, activation: act.clone() });
        }
        Ok(out)
    }
}

fn arrangement_samples(a: &Arrangement) -> Result<usize> {
    match *a {
        Arrangement::Packed { samples, .. }
        | Arrangement::Expanded { samples, .. }
        | Arrangement::Marked { samples, .. } => Ok(samples),
        Arrangement::Raw { .. } => Err(Error::Protocol("batch arrangement cannot be raw".into())),
    }
}
