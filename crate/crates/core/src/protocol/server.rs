//! Server role: holds the inputs (or receives them encrypted) and the
//! encrypted weights of the first `n` layers. Works with evaluation keys
//! only.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::layout::Arrangement;
use super::messages::*;
use super::plan::SplitPlan;
use super::wire::{Channel, MsgType};
use super::{decode_public, EpochMetrics, RefreshCounts};
use crate::backend::{Backend, HeValue};
use crate::ckks::CryptoParams;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{eval_poly_with, init_layers, PolyApprox, PolyEvalOptions};
use crate::packing::{align, matmat_rotsum, matmat_rotsum_plain_right, rotate_and_sum, sum_all};
use crate::packing::{Layout, PackMeta, PackedWeights, PackingScheme, RowOperand};

/// Relative tolerance when snapping a computed gradient scale onto the
/// weight scale.
const SCALE_SNAP: f64 = 1e-9;

/// What the server knows about the training set.
pub struct ServerData {
    pub samples: usize,
    /// Plaintext inputs (`samples x features`); `None` when the client
    /// encrypts them.
    pub features: Option<Matrix>,
}

#[derive(Clone, Debug, Default)]
pub struct ServerReport {
    pub epochs: Vec<EpochMetrics>,
    /// Level of every weight ciphertext after the run, per layer.
    pub final_levels: Vec<Vec<usize>>,
}

/// Input of one layer: plaintext vectors or ciphertexts, both in the
/// layer's input arrangement.
enum LayerInput {
    Plain { vectors: Vec<Vec<f64>>, values: Matrix },
    Encrypted(Vec<HeValue>),
}

struct HiddenCache {
    input: LayerInput,
    derivative: Vec<HeValue>,
}

struct Server<'a> {
    cfg: &'a Config,
    plan: SplitPlan,
    backend: Backend,
    weights: Vec<Vec<HeValue>>,
    poly: Option<PolyApprox>,
    counts: RefreshCounts,
    rotations: usize,
    fwd_out: usize,
    boundary_grad: usize,
    updates: usize,
    refresh_period: usize,
}

pub fn run_server(cfg: &Config, data: &ServerData, mut ch: Channel) -> Result<ServerReport> {
    serve_on(cfg, data, &mut ch)
}

/// Runs the server side on `ch`; on failure the peer gets a `SHUTDOWN`
/// carrying the reason.
pub fn serve_on(cfg: &Config, data: &ServerData, ch: &mut Channel) -> Result<ServerReport> {
    let result = serve(cfg, data, ch);
    if let Err(e) = &result {
        let _ = ch.send(MsgType::Shutdown, e.to_string().into_bytes());
    }
    result
}

fn serve(cfg: &Config, data: &ServerData, ch: &mut Channel) -> Result<ServerReport> {
    let digest = cfg.digest();
    let hello = ch.expect(MsgType::Hello)?;
    if hello != digest {
        return Err(Error::Protocol("config digest mismatch".into()));
    }
    ch.send(MsgType::Hello, digest.to_vec())?;

    let params: CryptoParams = cfg.crypto.params()?;
    let plan = SplitPlan::new(
        &cfg.model.layer_sizes,
        cfg.model.split,
        params.slot_count(),
        cfg.protocol.batch_size,
        cfg.protocol.packing_threshold,
    )?;
    let backend = decode_public(cfg, &params, &ch.expect(MsgType::PubKeys)?)?;
    if backend.has_secret() {
        return Err(Error::Protocol("server backend must not hold a secret key".into()));
    }
    for step in plan.rotation_steps() {
        if !backend.has_rotation(step) {
            return Err(Error::MissingRotationKey(step));
        }
    }
    if cfg.protocol.encrypt_data == data.features.is_some() {
        return Err(Error::Config("server inputs do not match the encrypt_data setting".into()));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x5e55_10a0);
    let activations = cfg.activations()?;
    let layers = init_layers(&cfg.model.layer_sizes, &activations, cfg.seed)?;
    let mut weights = Vec::with_capacity(plan.split());
    for (shape, layer) in plan.layers.iter().zip(&layers) {
        let vectors = shape.encode(&layer.weights, &layer.bias, plan.width)?;
        weights.push(encrypt_all(&backend, &vectors, None, &mut rng)?);
    }
    ch.send(
        MsgType::EncWeightsAck,
        encode_json(&WeightsAck { layers: plan.layers.clone(), level: backend.max_level() })?,
    )?;

    let poly = if plan.split() > 1 { activations[0].poly().cloned() } else { None };
    if plan.split() > 1 && poly.is_none() {
        return Err(Error::Config("hidden server layers need a polynomial activation".into()));
    }
    let refresh_period = cfg.refresh_period(backend.max_level());
    let mut s = Server {
        cfg,
        plan,
        backend,
        weights,
        poly,
        counts: RefreshCounts::default(),
        rotations: 0,
        fwd_out: 0,
        boundary_grad: 0,
        updates: 0,
        refresh_period,
    };

    let b = cfg.protocol.batch_size;
    let mut report = ServerReport::default();
    for epoch in 0..cfg.protocol.epochs {
        let start = Instant::now();
        let (sent0, recv0) = (ch.stats.bytes_sent, ch.stats.bytes_received);
        s.counts = RefreshCounts::default();
        s.rotations = 0;
        s.fwd_out = 0;
        s.boundary_grad = 0;
        for (batch, first) in (0..data.samples).step_by(b).enumerate() {
            let rows = b.min(data.samples - first);
            let x = data.features.as_ref().map(|f| f.slice_rows(first, rows));
            s.batch(ch, epoch, batch, rows, x)?;
        }
        ch.send(MsgType::EpochDone, encode_json(&EpochReport { epoch, ..Default::default() })?)?;
        let client: EpochReport = decode_json(&ch.expect(MsgType::EpochDone)?)?;
        report.epochs.push(EpochMetrics {
            epoch,
            samples: data.samples,
            loss: client.loss,
            accuracy: client.accuracy,
            wall_seconds: start.elapsed().as_secs_f64(),
            rotations: s.rotations,
            predicted_rotations: s.plan.rotations_per_epoch(data.samples, cfg.protocol.literal_gradient),
            bytes_sent: ch.stats.bytes_sent - sent0,
            bytes_received: ch.stats.bytes_received - recv0,
            fwd_out_cts: s.fwd_out,
            boundary_grad_cts: s.boundary_grad,
            refreshes: s.counts,
        });
    }

    let all: Vec<HeValue> = s.weights.iter().flatten().cloned().collect();
    report.final_levels = s.weights.iter().map(|l| l.iter().map(HeValue::level).collect()).collect();
    ch.send(MsgType::Shutdown, encode_bundle(&s.backend, &Farewell { layers: s.plan.layers.clone() }, &all)?)?;
    Ok(report)
}

fn encrypt_all(backend: &Backend, vectors: &[Vec<f64>], scale: Option<f64>, rng: &mut ChaCha20Rng) -> Result<Vec<HeValue>> {
    let seeds: Vec<u64> = vectors.iter().map(|_| rng.next_u64()).collect();
    vectors
        .par_iter()
        .zip(seeds)
        .map(|(v, seed)| backend.encrypt(v, scale, &mut ChaCha20Rng::seed_from_u64(seed)))
        .collect()
}

/// `x` transposed with a trailing row of ones (`features + 1 x samples`).
pub(crate) fn with_bias_row(x: &Matrix) -> Matrix {
    Matrix::from_fn(x.cols() + 1, x.rows(), |j, s| if j < x.cols() { x.get(s, j) } else { 1.0 })
}

fn snap_scale(mut v: HeValue, scale: f64) -> Result<HeValue> {
    if ((v.scale() - scale) / scale).abs() > SCALE_SNAP {
        return Err(Error::ScaleMismatch { left: v.scale(), right: scale });
    }
    v.relabel_scale(scale);
    Ok(v)
}

fn drop_all(backend: &Backend, v: &[HeValue], level: usize) -> Result<Vec<HeValue>> {
    v.iter().map(|c| backend.level_drop(c, level)).collect()
}

fn min_level(v: &[HeValue]) -> usize {
    v.iter().map(HeValue::level).min().unwrap_or(0)
}

impl Server<'_> {
    fn weight_scale(&self) -> f64 {
        self.backend.default_scale()
    }

    fn batch(&mut self, ch: &mut Channel, epoch: usize, batch: usize, samples: usize, x: Option<Matrix>) -> Result<()> {
        let n = self.plan.split();
        let width = self.plan.width;
        let in_arr = self.plan.input_arrangement(0, samples);
        let mut input = match x {
            Some(x) => {
                let m = match in_arr {
                    Arrangement::Packed { .. } => with_bias_row(&x),
                    _ => x.transpose(),
                };
                LayerInput::Plain { vectors: in_arr.scatter(&m, width)?, values: x }
            }
            None => {
                let req = DataRequest { epoch, batch, arrangement: in_arr };
                ch.send(MsgType::Data, encode_json(&req)?)?;
                let (echo, cts): (DataRequest, _) = decode_bundle(&self.backend, &ch.expect(MsgType::Data)?)?;
                if echo != req || cts.len() != in_arr.ct_count(width) {
                    return Err(Error::Protocol("encrypted inputs do not match the request".into()));
                }
                LayerInput::Encrypted(cts)
            }
        };

        let mut caches = Vec::with_capacity(n - 1);
        for l in 0..n - 1 {
            let (next, cache) = self.hidden_forward(ch, l, samples, input)?;
            caches.push(cache);
            input = next;
        }

        let out_arr = self.plan.output_arrangement(samples);
        if let LayerInput::Encrypted(cts) = &input {
            if min_level(cts) == 0 {
                let arr = self.plan.input_arrangement(n - 1, samples);
                input = LayerInput::Encrypted(self.refresh_raw(ch, RefreshReason::InPass, arr, cts.clone())?);
            }
        }
        self.ensure_weights(ch, n - 1, 1)?;
        let z = self.last_forward(&input, samples)?;
        let grad_scale = match &input {
            LayerInput::Encrypted(a) => {
                let level = min_level(a).min(self.backend.max_level());
                self.weight_scale() * self.backend.params().moduli()[level] as f64 / a[0].scale()
            }
            LayerInput::Plain { .. } => self.weight_scale(),
        };
        let literal = self.cfg.protocol.literal_gradient;
        let inputs = match (&input, literal) {
            (LayerInput::Plain { values, .. }, true) => Some(values.data().to_vec()),
            _ => None,
        };
        let header = ForwardHeader { epoch, batch, arrangement: out_arr, grad_scale, inputs };
        self.fwd_out += z.len();
        ch.send(MsgType::FwdOut, encode_bundle(&self.backend, &header, &z)?)?;

        let (gh, d): (GradientHeader, Vec<HeValue>) = decode_bundle(&self.backend, &ch.expect(MsgType::BoundaryGrad)?)?;
        if gh.batch != batch {
            return Err(Error::Protocol(format!("gradient for batch {} while at {batch}", gh.batch)));
        }
        self.boundary_grad += d.len();
        if literal {
            if !gh.weight_gradient || d.len() != self.plan.last().ct_count() {
                return Err(Error::Protocol("expected a full weight gradient".into()));
            }
            let w = self.weights.last_mut().expect("one layer");
            for (wj, gj) in w.iter_mut().zip(&d) {
                let (a, g) = align(&self.backend, wj, gj)?;
                *wj = self.backend.sub(&a, &g)?;
            }
        } else {
            if gh.arrangement != out_arr || d.len() != out_arr.ct_count(width) {
                return Err(Error::Protocol("boundary delta has the wrong arrangement".into()));
            }
            let mut upstream = self.last_backward(&input, &d, samples)?;
            for l in (0..n - 1).rev() {
                upstream = self.hidden_backward(ch, l, samples, &caches[l], upstream)?;
            }
        }

        self.updates += 1;
        if self.refresh_period > 0 && self.updates.is_multiple_of(self.refresh_period) {
            let layers: Vec<usize> = (0..n).collect();
            self.refresh_weights(ch, RefreshReason::Scheduled, &layers)?;
        }
        Ok(())
    }

    /// Forward through hidden layer `l`; returns the next layer's input
    /// (activations) and what the backward pass needs.
    fn hidden_forward(
        &mut self,
        ch: &mut Channel,
        l: usize,
        samples: usize,
        input: LayerInput,
    ) -> Result<(LayerInput, HiddenCache)> {
        let width = self.plan.width;
        let shape = self.plan.layers[l];
        let (inputs, outputs, block) = (shape.inputs(), shape.outputs(), shape.block());
        self.ensure_weights(ch, l, 1)?;
        let meta = PackMeta {
            scheme: PackingScheme::RotsumMatrix,
            rows: inputs + 1,
            cols: samples,
            padded_col_len: block,
            cols_per_ct: width / block,
            division_step: width / block,
            segments: 1,
            width,
        };
        let input = match input {
            LayerInput::Encrypted(cts) if min_level(&cts) == 0 => {
                let src = self.plan.input_arrangement(l, samples);
                LayerInput::Encrypted(self.refresh_raw(ch, RefreshReason::InPass, src, cts)?)
            }
            other => other,
        };
        let marked = match &input {
            LayerInput::Plain { vectors, .. } => {
                let layout = Layout { meta, vectors: vectors.clone() };
                matmat_rotsum_plain_right(&self.weights[l], inputs + 1, &layout, &self.backend)?
            }
            LayerInput::Encrypted(cts) => {
                let pw = PackedWeights { meta, ciphertexts: cts.clone() };
                let rows = RowOperand::Encrypted { rows: &self.weights[l], cols: inputs + 1 };
                matmat_rotsum(rows, &pw, &self.backend)?
            }
        };
        self.rotations += marked.rotations;

        let next_block = self.plan.layers[l + 1].block();
        let next_arr = if l + 2 < self.plan.split() {
            Arrangement::Packed { features: outputs, samples, block: next_block }
        } else {
            Arrangement::Expanded { features: outputs, samples, block: next_block }
        };
        let deriv_arr = self.plan.delta_arrangement(l, samples);
        let sz = self.poly.as_ref().expect("hidden layers have a polynomial").input_scale(self.backend.default_scale());
        let item = RefreshItem {
            source: Arrangement::Marked { features: outputs, samples, block },
            targets: vec![
                RefreshTarget { arrangement: next_arr, scale: sz },
                RefreshTarget { arrangement: deriv_arr, scale: sz },
            ],
        };
        let mut fresh = self.refresh(ch, RefreshReason::Relayout, vec![(item, marked.ciphertexts)])?.remove(0);
        let (z_deriv, z_next) = (fresh.pop().expect("two targets"), fresh.pop().expect("two targets"));

        let poly = self.poly.as_ref().expect("hidden layers have a polynomial");
        let mask = next_arr.mask(width);
        let bias = match next_arr {
            Arrangement::Packed { .. } => Some(next_arr.bias_slots(width)?),
            _ => None,
        };
        let activated: Vec<HeValue> = z_next
            .par_iter()
            .enumerate()
            .map(|(c, ct)| {
                let opts = PolyEvalOptions {
                    mask: Some(&mask[c]),
                    offset: bias.as_ref().map(|b| b[c].as_slice()),
                    target_scale: None,
                };
                eval_poly_with(&self.backend, ct, &poly.coefficients, poly.degree, &opts)
            })
            .collect::<Result<_>>()?;
        let dcoef = poly.derivative_coefficients();
        let dmask = deriv_arr.mask(width);
        let derivative: Vec<HeValue> = z_deriv
            .par_iter()
            .enumerate()
            .map(|(c, ct)| {
                let opts = PolyEvalOptions { mask: Some(&dmask[c]), offset: None, target_scale: None };
                eval_poly_with(&self.backend, ct, &dcoef, poly.degree.saturating_sub(1).max(1), &opts)
            })
            .collect::<Result<_>>()?;
        Ok((LayerInput::Encrypted(activated), HiddenCache { input, derivative }))
    }

    fn last_forward(&mut self, input: &LayerInput, samples: usize) -> Result<Vec<HeValue>> {
        let width = self.plan.width;
        let shape = *self.plan.last();
        let (inputs, block) = (shape.inputs(), shape.block());
        let n = self.plan.split();
        let w = &self.weights[n - 1];
        let cpc = width / block;
        let groups = samples.div_ceil(cpc);
        let ones = Arrangement::Expanded { features: 1, samples, block }.mask(width);
        let level = match input {
            LayerInput::Encrypted(a) => min_level(w).min(min_level(a)),
            LayerInput::Plain { .. } => min_level(w),
        };
        let w = drop_all(&self.backend, w, level)?;
        let a = match input {
            LayerInput::Encrypted(a) => Some(drop_all(&self.backend, a, level)?),
            LayerInput::Plain { .. } => None,
        };
        let backend = &self.backend;
        (0..groups)
            .into_par_iter()
            .map(|g| {
                let terms = (0..inputs)
                    .map(|j| match (input, &a) {
                        (_, Some(a)) => backend.mul_ct(&w[j], &a[j * groups + g]),
                        (LayerInput::Plain { values, .. }, None) if cpc == 1 => {
                            backend.mul_scalar(&w[j], values.get(g, j), None)
                        }
                        (LayerInput::Plain { vectors, .. }, None) => {
                            backend.mul_plain(&w[j], &vectors[j * groups + g], None)
                        }
                        (LayerInput::Encrypted(_), None) => unreachable!(),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let sum = sum_all(backend, terms)?;
                let bias = if cpc == 1 {
                    backend.mul_scalar(&w[inputs], 1.0, Some(sum.scale()))?
                } else {
                    backend.mul_plain(&w[inputs], &ones[g], Some(sum.scale()))?
                };
                backend.add(&sum, &backend.level_drop(&bias, sum.level())?)
            })
            .collect()
    }

    /// Updates the last server layer from the boundary delta `d`. Returns
    /// `dJ/dA` of its input in the `Marked` arrangement when the layer has
    /// an encrypted predecessor.
    fn last_backward(&mut self, input: &LayerInput, d: &[HeValue], samples: usize) -> Result<Vec<HeValue>> {
        let width = self.plan.width;
        let shape = *self.plan.last();
        let (inputs, block) = (shape.inputs(), shape.block());
        let n = self.plan.split();
        let cpc = width / block;
        let groups = samples.div_ceil(cpc);
        let fold = cpc.trailing_zeros() as usize;
        let ones = Arrangement::Expanded { features: 1, samples, block }.mask(width);
        let s_w = self.weight_scale();
        let backend = &self.backend;

        let grads: Vec<(HeValue, usize)> = (0..=inputs)
            .into_par_iter()
            .map(|j| {
                let terms = (0..groups)
                    .map(|g| {
                        if j == inputs {
                            return if cpc == 1 {
                                backend.mul_scalar(&d[g], 1.0, Some(s_w))
                            } else {
                                backend.mul_plain(&d[g], &ones[g], Some(s_w))
                            };
                        }
                        match input {
                            LayerInput::Plain { values, .. } if cpc == 1 => {
                                backend.mul_scalar(&d[g], values.get(g, j), Some(s_w))
                            }
                            LayerInput::Plain { vectors, .. } => {
                                backend.mul_plain(&d[g], &vectors[j * groups + g], Some(s_w))
                            }
                            LayerInput::Encrypted(a) => {
                                let (x, y) = align(backend, &d[g], &a[j * groups + g])?;
                                backend.mul_ct(&x, &y)
                            }
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let level = min_level(&terms);
                let sum = sum_all(backend, drop_all(backend, &terms, level)?)?;
                let (g, count) = rotate_and_sum(backend, &sum, block, fold)?;
                Ok((snap_scale(g, s_w)?, count))
            })
            .collect::<Result<_>>()?;

        let mut upstream = Vec::new();
        if n > 1 {
            let w = &self.weights[n - 1];
            let rounds = block.trailing_zeros() as usize;
            let parts: Vec<(HeValue, usize)> = (0..inputs * groups)
                .into_par_iter()
                .map(|idx| {
                    let (j, g) = (idx / groups, idx % groups);
                    let (x, y) = align(backend, &d[g], &w[j])?;
                    rotate_and_sum(backend, &backend.mul_ct(&x, &y)?, 1, rounds)
                })
                .collect::<Result<_>>()?;
            self.rotations += parts.iter().map(|p| p.1).sum::<usize>();
            upstream = parts.into_iter().map(|p| p.0).collect();
        }

        self.rotations += grads.iter().map(|g| g.1).sum::<usize>();
        let w = &mut self.weights[n - 1];
        for (wj, (gj, _)) in w.iter_mut().zip(&grads) {
            let (a, g) = align(backend, wj, gj)?;
            *wj = backend.sub(&a, &g)?;
        }
        Ok(upstream)
    }

    /// Backward through hidden layer `l`. `upstream` is `dJ/dA_l` in the
    /// arrangement produced by layer `l + 1`. Returns `dJ/dA_{l-1}` in the
    /// input arrangement of layer `l` (empty for the first layer).
    fn hidden_backward(
        &mut self,
        ch: &mut Channel,
        l: usize,
        samples: usize,
        cache: &HiddenCache,
        upstream: Vec<HeValue>,
    ) -> Result<Vec<HeValue>> {
        let width = self.plan.width;
        let shape = self.plan.layers[l];
        let (outputs, block) = (shape.outputs(), shape.block());
        let next_block = self.plan.layers[l + 1].block();
        let cpc = width / block;
        let groups = samples.div_ceil(cpc);
        let s_w = self.weight_scale();
        let top = self.backend.max_level();

        let mut derivative = cache.derivative.clone();
        if min_level(&derivative) < 2 {
            let arr = self.plan.delta_arrangement(l, samples);
            derivative = self.refresh_raw(ch, RefreshReason::InPass, arr, derivative)?;
        }
        let mut input_cts = match &cache.input {
            LayerInput::Encrypted(c) => Some(c.clone()),
            LayerInput::Plain { .. } => None,
        };
        let la = top.min(min_level(&derivative));
        let q = self.backend.params().moduli().to_vec();
        let s_dv = derivative[0].scale();
        let s_req = match &input_cts {
            Some(b) => {
                if min_level(b) == 0 {
                    let arr = self.plan.input_arrangement(l, samples);
                    input_cts = Some(self.refresh_raw(ch, RefreshReason::InPass, arr, b.clone())?);
                }
                let b = input_cts.as_ref().expect("set above");
                let lb = (la - 1).min(min_level(b));
                s_w * q[lb] as f64 * q[la] as f64 / (b[0].scale() * s_dv)
            }
            None => self.backend.default_scale(),
        };

        let source = if l + 2 == self.plan.split() {
            Arrangement::Marked { features: outputs, samples, block: next_block }
        } else {
            Arrangement::Packed { features: outputs, samples, block: next_block }
        };
        let target = RefreshTarget { arrangement: self.plan.delta_arrangement(l, samples), scale: s_req };
        let item = RefreshItem { source, targets: vec![target] };
        let fresh = self.refresh(ch, RefreshReason::Relayout, vec![(item, upstream)])?.remove(0).remove(0);

        let backend = &self.backend;
        let delta: Vec<HeValue> = fresh
            .par_iter()
            .zip(&derivative)
            .map(|(f, dv)| {
                let (x, y) = align(backend, f, dv)?;
                backend.mul_ct(&x, &y)
            })
            .collect::<Result<_>>()?;

        let mut downstream = Vec::new();
        if l > 0 {
            self.ensure_weights(ch, l, 1)?;
            let w = &self.weights[l];
            let backend = &self.backend;
            downstream = (0..groups)
                .into_par_iter()
                .map(|c| {
                    let terms = (0..outputs)
                        .map(|r| {
                            let (x, y) = align(backend, &delta[r * groups + c], &w[r])?;
                            backend.mul_ct(&x, &y)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let level = min_level(&terms);
                    sum_all(backend, drop_all(backend, &terms, level)?)
                })
                .collect::<Result<_>>()?;
        }

        let backend = &self.backend;
        let fold = cpc.trailing_zeros() as usize;
        let grads: Vec<(HeValue, usize)> = (0..outputs)
            .into_par_iter()
            .map(|r| {
                let terms = (0..groups)
                    .map(|c| {
                        let dl = &delta[r * groups + c];
                        match (&cache.input, &input_cts) {
                            (_, Some(b)) => {
                                let (x, y) = align(backend, dl, &b[c])?;
                                backend.mul_ct(&x, &y)
                            }
                            (LayerInput::Plain { vectors, .. }, None) => backend.mul_plain(dl, &vectors[c], Some(s_w)),
                            (LayerInput::Encrypted(_), None) => unreachable!(),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let level = min_level(&terms);
                let sum = sum_all(backend, drop_all(backend, &terms, level)?)?;
                let (g, count) = rotate_and_sum(backend, &sum, block, fold)?;
                Ok((snap_scale(g, s_w)?, count))
            })
            .collect::<Result<_>>()?;
        self.rotations += grads.iter().map(|g| g.1).sum::<usize>();
        let w = &mut self.weights[l];
        for (wr, (gr, _)) in w.iter_mut().zip(&grads) {
            let (a, g) = align(&self.backend, wr, gr)?;
            *wr = self.backend.sub(&a, &g)?;
        }
        Ok(downstream)
    }

    /// Refreshes layer `l`'s weights when any ciphertext is below `needed`.
    fn ensure_weights(&mut self, ch: &mut Channel, l: usize, needed: usize) -> Result<()> {
        if min_level(&self.weights[l]) < needed {
            self.refresh_weights(ch, RefreshReason::InPass, &[l])?;
        }
        Ok(())
    }

    fn refresh_weights(&mut self, ch: &mut Channel, reason: RefreshReason, layers: &[usize]) -> Result<()> {
        let s = self.weight_scale();
        let items = layers
            .iter()
            .map(|&l| {
                let count = self.weights[l].len();
                let item = RefreshItem {
                    source: Arrangement::Raw { count },
                    targets: vec![RefreshTarget { arrangement: Arrangement::Raw { count }, scale: s }],
                };
                (item, std::mem::take(&mut self.weights[l]))
            })
            .collect();
        let fresh = self.refresh(ch, reason, items)?;
        for (&l, mut f) in layers.iter().zip(fresh) {
            self.weights[l] = f.remove(0);
        }
        Ok(())
    }

    /// Refreshes ciphertexts slot for slot, keeping each one's scale.
    fn refresh_raw(
        &mut self,
        ch: &mut Channel,
        reason: RefreshReason,
        _arr: Arrangement,
        cts: Vec<HeValue>,
    ) -> Result<Vec<HeValue>> {
        let count = cts.len();
        let scale = cts.first().map_or(self.backend.default_scale(), HeValue::scale);
        let item = RefreshItem {
            source: Arrangement::Raw { count },
            targets: vec![RefreshTarget { arrangement: Arrangement::Raw { count }, scale }],
        };
        Ok(self.refresh(ch, reason, vec![(item, cts)])?.remove(0).remove(0))
    }

    /// One refresh round trip. Returns fresh ciphertexts per item and target.
    fn refresh(
        &mut self,
        ch: &mut Channel,
        reason: RefreshReason,
        items: Vec<(RefreshItem, Vec<HeValue>)>,
    ) -> Result<Vec<Vec<Vec<HeValue>>>> {
        self.counts.record(reason);
        if self.counts.total() > self.cfg.protocol.max_refreshes_per_epoch {
            return Err(Error::Protocol(format!(
                "refresh cap of {} per epoch exceeded",
                self.cfg.protocol.max_refreshes_per_epoch
            )));
        }
        let width = self.plan.width;
        let mut expected = Vec::new();
        let mut header = RefreshRequest { reason, items: Vec::new() };
        let mut values = Vec::new();
        for (item, cts) in items {
            let source_count = match item.source {
                Arrangement::Raw { count } => count,
                other => other.ct_count(width),
            };
            if cts.len() != source_count {
                return Err(Error::Dimension(format!("{} ciphertexts for {:?}", cts.len(), item.source)));
            }
            expected.push(item.targets.iter().map(|t| t.arrangement.ct_count(width)).collect::<Vec<_>>());
            header.items.push(item);
            values.extend(cts);
        }
        ch.send(MsgType::RefreshReq, encode_bundle(&self.backend, &header, &values)?)?;
        let (counts, fresh): (Vec<Vec<usize>>, Vec<HeValue>) =
            decode_bundle(&self.backend, &ch.expect(MsgType::RefreshResp)?)?;
        if counts != expected {
            return Err(Error::Protocol("refresh response does not match the request".into()));
        }
        let top = self.backend.max_level();
        if fresh.iter().any(|c| c.level() != top) {
            return Err(Error::Protocol("refreshed ciphertext is not at the top level".into()));
        }
        let mut it = fresh.into_iter();
        Ok(expected
            .iter()
            .map(|targets| targets.iter().map(|&k| it.by_ref().take(k).collect()).collect())
            .collect())
    }
}
