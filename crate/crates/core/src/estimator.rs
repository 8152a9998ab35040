//! Cost model for choosing how many layers the server runs encrypted.
//!
//! Compute time comes from per-operation microbenchmarks multiplied by the
//! operation counts of the split plan; traffic from the ciphertext count of
//! the server output and boundary delta.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{Backend, BackendKind};
use crate::ckks::{keygen, CkksContext, CryptoParams};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::nn::poly::levels_for_degree;
use crate::nn::ActivationSpec;
use crate::packing::{count_rotations, padded_len};
use crate::protocol::plan::{refresh_needed, LayerShape, SplitPlan};

/// Seconds source for the microbenchmark; injectable for tests.
pub trait Clock {
    fn now(&mut self) -> f64;
}

pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpTiming {
    /// Median seconds per operation.
    pub median: f64,
    /// Median absolute deviation.
    pub mad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicrobenchProfile {
    pub backend: BackendKind,
    pub params_hash: String,
    pub machine_id: String,
    pub reps: usize,
    pub t_rot: OpTiming,
    pub t_encode: OpTiming,
    pub t_encrypt: OpTiming,
    pub t_mulplain: OpTiming,
    pub t_mulct: OpTiming,
    pub t_mulscalar: OpTiming,
    pub t_add: OpTiming,
    pub t_decrypt: OpTiming,
    pub t_decode: OpTiming,
}

impl MicrobenchProfile {
    /// Same timing for every operation; for tests and dry runs.
    pub fn uniform(params: &CryptoParams, backend: BackendKind, seconds: f64) -> Self {
        let t = OpTiming { median: seconds, mad: 0.0 };
        MicrobenchProfile {
            backend,
            params_hash: params_hash(params),
            machine_id: machine_id(),
            reps: 0,
            t_rot: t,
            t_encode: t,
            t_encrypt: t,
            t_mulplain: t,
            t_mulct: t,
            t_mulscalar: t,
            t_add: t,
            t_decrypt: t,
            t_decode: t,
        }
    }

    /// How many times faster a scalar multiplication is than a
    /// ciphertext-ciphertext one.
    pub fn mulct_over_mulscalar(&self) -> f64 {
        self.t_mulct.median / self.t_mulscalar.median
    }
}

pub fn params_hash(params: &CryptoParams) -> String {
    hex(&params.digest()[..8])
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Stable identifier of this host: hostname, architecture and core count.
pub fn machine_id() -> String {
    let host = fs::read_to_string("/etc/hostname")
        .ok()
        .or_else(|| std::env::var("HOSTNAME").ok())
        .or_else(|| std::env::var("COMPUTERNAME").ok())
        .unwrap_or_default();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let text = format!("{}|{}|{}|{}", host.trim(), std::env::consts::OS, std::env::consts::ARCH, cores);
    hex(&Sha256::digest(text.as_bytes())[..6])
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn time_op(clock: &mut dyn Clock, reps: usize, mut op: impl FnMut() -> Result<()>) -> Result<OpTiming> {
    op()?;
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = clock.now();
        op()?;
        samples.push(clock.now() - t0);
    }
    let m = median(&mut samples);
    let mut dev: Vec<f64> = samples.iter().map(|s| (s - m).abs()).collect();
    Ok(OpTiming { median: m, mad: median(&mut dev) })
}

/// Key-holding backend with a rotation key for step 1.
pub fn bench_backend(kind: BackendKind, params: &CryptoParams, seed: u64) -> Result<Backend> {
    Ok(match kind {
        BackendKind::Ckks => {
            let ctx = Arc::new(CkksContext::new(params.clone()));
            let keys = keygen(&ctx, &[1], &mut ChaCha20Rng::seed_from_u64(seed))?;
            Backend::ckks(ctx, &keys)
        }
        BackendKind::NoiseSim => Backend::noise_sim(params.clone(), crate::backend::NoiseModel::for_params(params), &[1]),
    })
}

/// Times each primitive `reps` times after one warm-up call, single
/// threaded, on fresh top-level ciphertexts.
pub fn run_microbench(backend: &Backend, reps: usize, clock: &mut dyn Clock) -> Result<MicrobenchProfile> {
    if reps < 10 {
        return Err(Error::Config(format!("microbenchmark needs at least 10 repetitions, got {reps}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(0xbe7c);
    let slots = backend.slots();
    let values: Vec<f64> = (0..slots).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = backend.encrypt(&values, None, &mut rng)?;
    let b = backend.encrypt(&values, None, &mut rng)?;
    let scale = backend.default_scale();
    let top = backend.max_level();

    let (t_encode, t_decode) = match backend.context() {
        Some(ctx) => {
            let poly = ctx.encode(&values, scale, top)?;
            let enc = time_op(clock, reps, || ctx.encode(&values, scale, top).map(drop))?;
            let dec = time_op(clock, reps, || {
                std::hint::black_box(ctx.decode(&poly, scale));
                Ok(())
            })?;
            (enc, dec)
        }
        None => {
            let copy = || {
                std::hint::black_box(values.iter().map(|v| v * scale).collect::<Vec<_>>());
                Ok(())
            };
            (time_op(clock, reps, copy)?, time_op(clock, reps, copy)?)
        }
    };
    let mut erng = ChaCha20Rng::seed_from_u64(1);
    let t_encrypt = time_op(clock, reps, || backend.encrypt(&values, None, &mut erng).map(drop))?;
    let t_rot = time_op(clock, reps, || backend.rotate(&a, 1).map(drop))?;
    let t_mulplain = time_op(clock, reps, || backend.mul_plain(&a, &values, None).map(drop))?;
    let t_mulct = time_op(clock, reps, || backend.mul_ct(&a, &b).map(drop))?;
    let t_mulscalar = time_op(clock, reps, || backend.mul_scalar(&a, 0.37, None).map(drop))?;
    let t_add = time_op(clock, reps, || backend.add(&a, &b).map(drop))?;
    let t_decrypt = time_op(clock, reps, || backend.decrypt(&a).map(drop))?;
    Ok(MicrobenchProfile {
        backend: backend.kind(),
        params_hash: params_hash(backend.params()),
        machine_id: machine_id(),
        reps,
        t_rot,
        t_encode,
        t_encrypt,
        t_mulplain,
        t_mulct,
        t_mulscalar,
        t_add,
        t_decrypt,
        t_decode,
    })
}

pub fn profile_path(dir: &Path, kind: BackendKind, params: &CryptoParams) -> PathBuf {
    dir.join(format!("profile-{}-{}-{}.json", kind.name(), params_hash(params), machine_id()))
}

/// Cached profile for this machine and parameter set, benchmarking on a miss.
pub fn load_or_bench(dir: &Path, kind: BackendKind, params: &CryptoParams, reps: usize) -> Result<MicrobenchProfile> {
    let path = profile_path(dir, kind, params);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(p) = serde_json::from_str::<MicrobenchProfile>(&text) {
            if p.params_hash == params_hash(params) && p.reps >= reps {
                return Ok(p);
            }
        }
    }
    let backend = bench_backend(kind, params, 1)?;
    let profile = run_microbench(&backend, reps, &mut SystemClock::default())?;
    fs::create_dir_all(dir)?;
    fs::write(&path, serde_json::to_string_pretty(&profile)?)?;
    Ok(profile)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRequest {
    pub layer_sizes: Vec<usize>,
    /// Inclusive range of server layer counts to evaluate.
    pub split_range: (usize, usize),
    /// Desired epoch time in seconds.
    pub desired_time: f64,
    /// Bytes per second.
    pub bandwidth: f64,
    pub samples: usize,
    pub batch_size: usize,
    pub ring_size_log: u32,
    pub level_budget: usize,
    /// Degree of the server's polynomial activation.
    pub activation_degree: Option<usize>,
    pub packing_threshold: f64,
    pub encrypt_data: bool,
    /// Ciphertext size in MB used for the idealized traffic figure.
    pub ideal_ciphertext_mb: f64,
    /// Serialized size of one ciphertext at the top level, in bytes.
    pub ciphertext_bytes: usize,
    /// Share of the desired time the communication may take when sizing the
    /// last server layer.
    pub comm_fraction: f64,
}

impl EstimateRequest {
    pub fn from_config(cfg: &Config, samples: usize) -> Result<Self> {
        let params = cfg.crypto.params()?;
        let layers = cfg.model.layer_sizes.len() - 1;
        let degree = match cfg.model.server_activation {
            ActivationSpec::ApproxSigmoid { degree, .. } => Some(degree),
            _ => None,
        };
        let backend_size = match cfg.crypto.backend {
            BackendKind::Ckks => crate::ckks::serial::ciphertext_size(params.ring_size_log(), params.level_budget()),
            BackendKind::NoiseSim => 4 + 1 + 4 + 8 + 8 + 8 * params.slot_count(),
        };
        Ok(EstimateRequest {
            layer_sizes: cfg.model.layer_sizes.clone(),
            split_range: cfg.estimator.split_range.unwrap_or((1, layers - 1)),
            desired_time: cfg.estimator.desired_time,
            bandwidth: cfg.estimator.bandwidth,
            samples,
            batch_size: cfg.protocol.batch_size,
            ring_size_log: params.ring_size_log(),
            level_budget: params.level_budget(),
            activation_degree: degree,
            packing_threshold: cfg.protocol.packing_threshold,
            encrypt_data: cfg.protocol.encrypt_data,
            ideal_ciphertext_mb: cfg.estimator.ideal_ciphertext_mb,
            ciphertext_bytes: backend_size,
            comm_fraction: cfg.estimator.comm_fraction,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.desired_time > 0.0 && self.bandwidth > 0.0) {
            return Err(Error::Config("desired time and bandwidth must be positive".into()));
        }
        if self.batch_size == 0 || self.layer_sizes.len() < 3 {
            return Err(Error::Config("estimate needs a batch size and at least two weight layers".into()));
        }
        Ok(())
    }

    fn slots(&self) -> usize {
        1 << (self.ring_size_log - 1)
    }
}

/// Operation counts for one epoch on the server and client.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpCounts {
    pub rotations: usize,
    pub mul_ct: usize,
    pub mul_plain: usize,
    pub mul_scalar: usize,
    pub add: usize,
    pub client_encrypt: usize,
    pub client_decrypt: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEstimate {
    pub split: usize,
    /// Size of the last server layer.
    pub last_layer: usize,
    /// Rotations per sample and pass from the layer sizes, times samples and
    /// passes (one pass for a single server layer, two otherwise).
    pub formula_rotations: f64,
    /// Rotations the protocol performs per epoch.
    pub rotations: usize,
    pub ops: OpCounts,
    /// Multiplicative depth of one forward pass through the server layers.
    pub depth: usize,
    pub refresh_rule_triggered: bool,
    pub scheduled_refreshes: usize,
    /// Client round trips for re-arranging and topping up intermediate
    /// results between encrypted layers.
    pub relayout_refreshes: usize,
    pub compute_seconds: f64,
    pub traffic_bytes: f64,
    pub ideal_traffic_mb: f64,
    pub comm_seconds: f64,
    pub total_seconds: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub split: usize,
    /// Largest last server layer whose traffic fits the communication share
    /// of the desired time.
    pub max_last_layer: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub request: EstimateRequest,
    pub profile_hash: String,
    pub splits: Vec<SplitEstimate>,
    pub recommendation: Option<Recommendation>,
    /// Cheapest option when no split meets the desired time: one server
    /// layer with the client computing the weight gradient, zero rotations.
    pub fallback: Option<SplitEstimate>,
}

fn batches(samples: usize, batch: usize) -> impl Iterator<Item = usize> {
    let full = samples / batch;
    let rest = samples % batch;
    std::iter::repeat_n(batch, full).chain((rest > 0).then_some(rest))
}

fn count_ops(plan: &SplitPlan, samples: usize, encrypt_data: bool, degree: Option<usize>, literal: bool) -> OpCounts {
    let width = plan.width;
    let n = plan.split();
    let poly_mults = degree.map_or(0, |d| d + levels_for_degree(d));
    let mut c = OpCounts { rotations: plan.rotations_per_epoch(samples, literal), ..Default::default() };
    for b in batches(samples, plan.batch_size) {
        for (l, shape) in plan.layers.iter().enumerate() {
            let groups = b.div_ceil(width / shape.block());
            let encrypted_input = l > 0 || encrypt_data;
            let (outputs, inputs) = (shape.outputs(), shape.inputs());
            match *shape {
                LayerShape::Rows { .. } => {
                    let products = outputs * groups;
                    if encrypted_input {
                        c.mul_ct += 2 * products;
                    } else {
                        c.mul_plain += 2 * products;
                    }
                    c.mul_ct += products * (1 + usize::from(l > 0));
                    let next = plan.layers[l + 1].block();
                    let act_cts = outputs * b.div_ceil(width / next) + outputs * groups;
                    c.mul_ct += act_cts * poly_mults;
                    c.add += 3 * products + act_cts * poly_mults;
                    c.client_decrypt += outputs * groups * 2;
                    c.client_encrypt += act_cts + outputs * groups;
                }
                LayerShape::Columns { .. } => {
                    let products = (inputs + 1) * groups;
                    let scalar = width / shape.block() == 1;
                    if literal {
                        c.mul_plain += products;
                        c.add += inputs + 1;
                    } else if encrypted_input {
                        c.mul_ct += 2 * products;
                    } else if scalar {
                        c.mul_scalar += 2 * products;
                    } else {
                        c.mul_plain += 2 * products;
                    }
                    if n > 1 {
                        c.mul_ct += inputs * groups;
                    }
                    c.add += 2 * products;
                    let out = plan.fwd_out_count(b);
                    c.client_decrypt += out;
                    c.client_encrypt += if literal { inputs + 1 } else { out };
                }
            }
        }
        if encrypt_data {
            c.client_encrypt += plan.input_arrangement(0, b).ct_count(width);
        }
    }
    c
}

fn compute_seconds(ops: &OpCounts, p: &MicrobenchProfile) -> f64 {
    ops.rotations as f64 * p.t_rot.median
        + ops.mul_ct as f64 * p.t_mulct.median
        + ops.mul_plain as f64 * (p.t_mulplain.median + p.t_encode.median)
        + ops.mul_scalar as f64 * p.t_mulscalar.median
        + ops.add as f64 * p.t_add.median
        + ops.client_encrypt as f64 * (p.t_encode.median + p.t_encrypt.median)
        + ops.client_decrypt as f64 * (p.t_decrypt.median + p.t_decode.median)
}

/// Idealized traffic in MB: `|X| * |l_n| / (N/2) * |c|`.
pub fn ideal_traffic_mb(samples: usize, last_layer: usize, slots: usize, ciphertext_mb: f64) -> f64 {
    samples as f64 * last_layer as f64 / slots as f64 * ciphertext_mb
}

fn estimate_split(req: &EstimateRequest, profile: &MicrobenchProfile, split: usize, literal: bool) -> Result<SplitEstimate> {
    let slots = req.slots();
    let plan = SplitPlan::new(&req.layer_sizes, split, slots, req.batch_size, req.packing_threshold)?;
    let ops = count_ops(&plan, req.samples, req.encrypt_data, req.activation_degree, literal);
    let passes = if split > 1 { 2.0 } else { 1.0 };
    let formula = count_rotations(&req.layer_sizes[..=split], slots).exact * req.samples as f64 * passes;
    let hidden_degree = req.activation_degree.filter(|_| split > 1);
    let depth = hidden_degree.map_or(0, levels_for_degree) * (split - 1) + split;
    let updates = req.samples.div_ceil(req.batch_size);
    let period = req.level_budget.saturating_sub(1);
    let scheduled = updates.checked_div(period).unwrap_or(0);
    let relayout = updates * 2 * (split - 1);
    let last = req.layer_sizes[split];
    let fwd = plan.fwd_out_per_epoch(req.samples);
    let grad = if literal { updates * (req.layer_sizes[split - 1] + 1) } else { fwd };
    let refresh_cts: usize = batches(req.samples, req.batch_size)
        .map(|b| {
            plan.layers[..split - 1]
                .iter()
                .enumerate()
                .map(|(l, s)| {
                    let groups = b.div_ceil(slots / s.block());
                    let next = plan.layers[l + 1].block();
                    s.outputs() * groups * 3 + s.outputs() * b.div_ceil(slots / next) + s.outputs() * groups
                })
                .sum::<usize>()
        })
        .sum();
    let weight_cts: usize = plan.layers.iter().map(LayerShape::ct_count).sum();
    let traffic = (fwd + grad + refresh_cts + 2 * scheduled * weight_cts) as f64 * req.ciphertext_bytes as f64;
    let compute = compute_seconds(&ops, profile);
    let comm = traffic / req.bandwidth;
    let total = compute + comm;
    Ok(SplitEstimate {
        split,
        last_layer: last,
        formula_rotations: if literal { 0.0 } else { formula },
        rotations: ops.rotations,
        ops,
        depth,
        refresh_rule_triggered: refresh_needed(hidden_degree, split, req.level_budget),
        scheduled_refreshes: scheduled,
        relayout_refreshes: relayout,
        compute_seconds: compute,
        traffic_bytes: traffic,
        ideal_traffic_mb: ideal_traffic_mb(req.samples, last, slots, req.ideal_ciphertext_mb),
        comm_seconds: comm,
        total_seconds: total,
        feasible: total <= req.desired_time,
    })
}

/// Largest last-layer width whose per-epoch output and delta traffic stays
/// within `comm_fraction` of the desired time.
pub fn max_last_layer(req: &EstimateRequest) -> usize {
    let slots = req.slots();
    let budget = req.comm_fraction * req.desired_time * req.bandwidth;
    let mut best = 0;
    for width in 1..=slots {
        let per_ct = slots / padded_len(width).min(slots);
        let cts: usize = batches(req.samples, req.batch_size).map(|b| b.div_ceil(per_ct)).sum();
        if (2 * cts) as f64 * req.ciphertext_bytes as f64 <= budget {
            best = width;
        }
    }
    best
}

pub fn estimate_epoch(req: &EstimateRequest, profile: &MicrobenchProfile) -> Result<EstimateReport> {
    req.validate()?;
    let layers = req.layer_sizes.len() - 1;
    let (lo, hi) = req.split_range;
    let splits = (lo.max(1)..=hi.min(layers - 1))
        .map(|n| estimate_split(req, profile, n, false))
        .collect::<Result<Vec<_>>>()?;
    let recommendation = recommend_split(&splits).map(|split| Recommendation { split, max_last_layer: max_last_layer(req) });
    let fallback = if recommendation.is_none() && !req.encrypt_data {
        Some(estimate_split(req, profile, 1, true)?)
    } else {
        None
    };
    Ok(EstimateReport { request: req.clone(), profile_hash: profile.params_hash.clone(), splits, recommendation, fallback })
}

/// The deepest feasible split; among feasible splits with the same total
/// time, the smaller one.
pub fn recommend_split(splits: &[SplitEstimate]) -> Option<usize> {
    let deepest = splits.iter().filter(|s| s.feasible).max_by_key(|s| s.split)?;
    splits
        .iter()
        .filter(|s| s.feasible && s.total_seconds == deepest.total_seconds)
        .map(|s| s.split)
        .min()
}

impl EstimateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>5} {:>6} {:>14} {:>12} {:>8} {:>10} {:>12} {:>10} {:>10} {:>10} {:>8}",
            "split", "last", "formula_rot", "rotations", "depth", "refreshes", "traffic_MB", "ideal_MB", "compute_s", "comm_s", "feasible"
        );
        let rows = self.splits.iter().chain(self.fallback.iter());
        for s in rows {
            let _ = writeln!(
                out,
                "{:>5} {:>6} {:>14.1} {:>12} {:>8} {:>10} {:>12.3} {:>10.8} {:>10.3} {:>10.3} {:>8}",
                s.split,
                s.last_layer,
                s.formula_rotations,
                s.rotations,
                s.depth,
                s.scheduled_refreshes + s.relayout_refreshes,
                s.traffic_bytes / 1e6,
                s.ideal_traffic_mb,
                s.compute_seconds,
                s.comm_seconds,
                if s.feasible { "yes" } else { "no" }
            );
        }
        match (&self.recommendation, &self.fallback) {
            (Some(r), _) => {
                let _ = writeln!(out, "recommended split: {} (last server layer up to {})", r.split, r.max_last_layer);
            }
            (None, Some(_)) => {
                let _ = writeln!(out, "no split meets the desired time; cheapest option is one server layer with client-side weight gradients (0 rotations)");
            }
            (None, None) => {
                let _ = writeln!(out, "no split meets the desired time");
            }
        }
        out
    }
}
