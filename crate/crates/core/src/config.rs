//! Run configuration: one JSON document with sections `model`, `crypto`,
//! `protocol`, `data` and `estimator`, plus a top-level seed.
//!
//! The SHA-256 of the canonical encoding (the `serde_json` output of the
//! parsed document) is exchanged in the handshake, so both parties must run
//! with identical settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{BackendKind, NoiseModel};
use crate::ckks::CryptoParams;
use crate::data::{self, CsvSchema, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::nn::{Activation, ActivationSpec, Loss};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub crypto: CryptoConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    /// Directory relative data paths are resolved against. Not part of the
    /// digest.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Full list of layer widths including the input, e.g. `[784, 128, 32, 10]`.
    pub layer_sizes: Vec<usize>,
    /// Number of weight layers held (encrypted) by the server.
    pub split: usize,
    /// Activation of server layers before the last one. Evaluated
    /// homomorphically, so it must be polynomial.
    #[serde(default = "default_hidden")]
    pub server_activation: ActivationSpec,
    /// Activation of every client layer and of the boundary (applied by the
    /// client after decrypting the server output).
    #[serde(default = "default_client")]
    pub client_activation: ActivationSpec,
    #[serde(default)]
    pub loss: Loss,
}

fn default_hidden() -> ActivationSpec {
    ActivationSpec::ApproxSigmoid { degree: 7, lo: -15.0, hi: 15.0 }
}

fn default_client() -> ActivationSpec {
    ActivationSpec::Sigmoid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CryptoConfig {
    pub backend: BackendKind,
    pub ring_size_log: u32,
    pub log_qp: u32,
    pub scale_log: u32,
    /// Simulator noise: `None` derives it from the parameters, `Some(0.0)`
    /// gives exact arithmetic.
    #[serde(default)]
    pub sim_noise: Option<f64>,
}

impl Default for CryptoConfig {
    fn default() -> Self {
        CryptoConfig { backend: BackendKind::Ckks, ring_size_log: 13, log_qp: 218, scale_log: 30, sim_noise: None }
    }
}

impl CryptoConfig {
    pub fn params(&self) -> Result<CryptoParams> {
        CryptoParams::new(self.ring_size_log, self.log_qp, self.scale_log)
    }

    pub fn noise_model(&self, params: &CryptoParams) -> NoiseModel {
        match self.sim_noise {
            None => NoiseModel::for_params(params),
            Some(0.0) => NoiseModel::exact(),
            Some(s) => NoiseModel { stddev: s, precision_bits: params.scale_log() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Client encrypts the inputs; otherwise the server sees plaintext X.
    #[serde(default)]
    pub encrypt_data: bool,
    /// Client computes the server weight gradient from shipped inputs.
    /// Only valid with `split = 1` and plaintext inputs.
    #[serde(default)]
    pub literal_gradient: bool,
    /// Weight refresh every this many updates; `None` means `L - 1`, `0`
    /// disables the schedule.
    #[serde(default)]
    pub refresh_every: Option<usize>,
    /// Refresh round trips allowed per epoch before the run aborts.
    #[serde(default = "default_refresh_cap")]
    pub max_refreshes_per_epoch: usize,
    #[serde(default = "default_threshold")]
    pub packing_threshold: f64,
    #[serde(default = "default_session")]
    pub session_id: u64,
}

fn default_refresh_cap() -> usize {
    100_000
}

fn default_threshold() -> f64 {
    crate::packing::DEFAULT_SCALAR_THRESHOLD
}

fn default_session() -> u64 {
    1
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            epochs: 10,
            batch_size: 60,
            learning_rate: 0.5,
            encrypt_data: false,
            literal_gradient: false,
            refresh_every: None,
            max_refreshes_per_epoch: default_refresh_cap(),
            packing_threshold: default_threshold(),
            session_id: default_session(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: Option<CsvSchema>,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Synth(SynthConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    #[serde(flatten)]
    pub source: DataSource,
    /// Keep at most this many samples (after shuffling).
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default = "default_true")]
    pub shuffle: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Desired epoch time in seconds.
    pub desired_time: f64,
    /// Bytes per second.
    pub bandwidth: f64,
    /// Samples per epoch; `None` uses the dataset size.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Inclusive range of split indices to consider; `None` means all.
    #[serde(default)]
    pub split_range: Option<(usize, usize)>,
    /// Idealized ciphertext size in MB used for the traffic figure.
    pub ideal_ciphertext_mb: f64,
    /// Share of the desired time the communication may take when sizing
    /// the last server layer.
    pub comm_fraction: f64,
    /// Microbenchmark repetitions.
    pub bench_reps: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            desired_time: 3600.0,
            bandwidth: 1_000_000.0,
            samples: None,
            split_range: None,
            ideal_ciphertext_mb: 0.0078125,
            comm_fraction: 0.5,
            bench_reps: 100,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical encoding.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).into()
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.layer_sizes.len() < 3 {
            return Err(Error::Config("need at least two weight layers".into()));
        }
        if m.layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let layers = m.layer_sizes.len() - 1;
        if m.split == 0 || m.split >= layers {
            return Err(Error::Config(format!("split must be in [1, {}], got {}", layers - 1, m.split)));
        }
        if m.split > 1 {
            match m.server_activation.resolve()? {
                Activation::Poly(_) | Activation::Identity => {}
                Activation::Sigmoid => {
                    return Err(Error::Config("server hidden layers need a polynomial activation".into()))
                }
            }
        } else {
            m.server_activation.resolve()?;
        }
        m.client_activation.resolve()?;
        let p = &self.protocol;
        if p.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(p.learning_rate.is_finite() && p.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if p.literal_gradient && (m.split != 1 || p.encrypt_data) {
            return Err(Error::Config("literal_gradient requires split = 1 and plaintext inputs".into()));
        }
        let e = &self.estimator;
        if e.desired_time.is_nan() || e.bandwidth.is_nan() || e.desired_time <= 0.0 || e.bandwidth <= 0.0 {
            return Err(Error::Config("estimator desired_time and bandwidth must be positive".into()));
        }
        if let Some((lo, hi)) = e.split_range {
            if lo == 0 || lo > hi {
                return Err(Error::Config("estimator split_range must satisfy 1 <= lo <= hi".into()));
            }
        }
        self.crypto.params()?;
        Ok(())
    }

    /// Activations per weight layer: polynomial on server hidden layers,
    /// the client activation from the boundary on.
    pub fn activations(&self) -> Result<Vec<Activation>> {
        let hidden = self.model.server_activation.resolve()?;
        let client = self.model.client_activation.resolve()?;
        let n = self.model.split;
        Ok((0..self.model.layer_sizes.len() - 1)
            .map(|l| if l + 1 < n { hidden.clone() } else { client.clone() })
            .collect())
    }

    /// Weight refresh period in updates (0 = never).
    pub fn refresh_period(&self, level_budget: usize) -> usize {
        self.protocol.refresh_every.unwrap_or(level_budget.saturating_sub(1))
    }

    /// Loads the dataset, shuffled and truncated as configured. Checks the
    /// feature and class counts against the layer sizes.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let resolve = |p: &Path| match &self.base_dir {
            Some(dir) if p.is_relative() && !p.exists() => dir.join(p),
            _ => p.to_path_buf(),
        };
        let mut ds = match &self.data.source {
            DataSource::Csv { path, schema } => {
                data::load_csv(&resolve(path), schema.as_ref().unwrap_or(&CsvSchema::bcw()))?
            }
            DataSource::Idx { images, labels } => data::load_idx(&resolve(images), &resolve(labels))?,
            DataSource::Synth(s) => data::synth(s, self.seed)?,
        };
        if self.data.shuffle {
            ds = ds.shuffled(self.seed);
        }
        if let Some(limit) = self.data.limit {
            ds = ds.take(limit);
        }
        let sizes = &self.model.layer_sizes;
        if ds.feature_count() != sizes[0] {
            return Err(Error::Config(format!(
                "dataset has {} features, model input is {}",
                ds.feature_count(),
                sizes[0]
            )));
        }
        let out = *sizes.last().expect("validated");
        if ds.class_count() != out {
            return Err(Error::Config(format!("dataset has {} classes, model output is {out}", ds.class_count())));
        }
        Ok(ds)
    }
}

/// Command-line overrides of config keys.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub backend: Option<BackendKind>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) -> Result<()> {
        if let Some(b) = self.backend {
            cfg.crypto.backend = b;
        }
        if let Some(b) = self.batch_size {
            cfg.protocol.batch_size = b;
        }
        if let Some(e) = self.epochs {
            cfg.protocol.epochs = e;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "seed": 3,
        "model": { "layer_sizes": [4, 8, 3, 2], "split": 2 },
        "crypto": { "backend": "noise-sim", "ring_size_log": 11, "log_qp": 160, "scale_log": 30 },
        "protocol": { "epochs": 2, "batch_size": 16, "learning_rate": 0.3 },
        "data": { "source": "synth", "samples": 50, "features": 4, "classes": 2 }
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = Config::from_json(SAMPLE).unwrap();
        assert_eq!(cfg.model.split, 2);
        assert_eq!(cfg.crypto.backend, BackendKind::NoiseSim);
        assert_eq!(cfg.protocol.packing_threshold, 2.7);
        assert_eq!(cfg.estimator.ideal_ciphertext_mb, 0.0078125);
        let acts = cfg.activations().unwrap();
        assert!(matches!(acts[0], Activation::Poly(_)));
        assert!(matches!(acts[1], Activation::Sigmoid));
        assert_eq!(cfg.refresh_period(5), 4);
        let ds = cfg.load_dataset().unwrap();
        assert_eq!(ds.len(), 50);
    }

    #[test]
    fn digest_tracks_content() {
        let a = Config::from_json(SAMPLE).unwrap();
        let b = Config::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
        let mut c = a.clone();
        c.model.layer_sizes[1] = 9;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = Config::from_json(SAMPLE).unwrap();
        cfg.model.split = 3;
        assert!(cfg.validate().is_err());
        cfg.model.split = 2;
        cfg.protocol.literal_gradient = true;
        assert!(cfg.validate().is_err());
        cfg.protocol.literal_gradient = false;
        cfg.model.server_activation = ActivationSpec::Sigmoid;
        assert!(cfg.validate().is_err());
        assert!(Config::from_json(&SAMPLE.replace("\"seed\"", "\"sed\"")).is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = Config::from_json(SAMPLE).unwrap();
        Overrides { epochs: Some(0), seed: Some(9), ..Default::default() }.apply(&mut cfg).unwrap();
        assert_eq!((cfg.protocol.epochs, cfg.seed), (0, 9));
        assert!(Overrides { batch_size: Some(0), ..Default::default() }.apply(&mut cfg).is_err());
    }
}
