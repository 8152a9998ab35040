//! Two-party training: the server runs the first layers on encrypted
//! weights, the client owns the keys, the remaining layers and the labels.
//!
//! See `docs/protocol.md` for the message flow.

pub mod client;
pub mod layout;
pub mod messages;
pub mod monolith;
pub mod plan;
pub mod server;
pub mod wire;

use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendKind, NoiseModel};
use crate::ckks::serial::{self, ByteReader};
use crate::ckks::{CkksContext, CryptoParams};
use crate::config::Config;
use crate::data::Dataset;
use crate::error::{Error, Result};

pub use client::{run_client, ClientReport};
pub use layout::Arrangement;
pub use messages::RefreshReason;
pub use plan::{refresh_needed, LayerShape, SplitPlan};
pub use server::{run_server, ServerData, ServerReport};
pub use wire::{pipe, Channel, MsgType, TcpTransport, TrafficStats};

const SIM_KEYS_MAGIC: &[u8; 4] = b"SIMK";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefreshCounts {
    pub scheduled: usize,
    pub in_pass: usize,
    pub relayout: usize,
}

impl RefreshCounts {
    pub fn record(&mut self, reason: RefreshReason) {
        match reason {
            RefreshReason::Scheduled => self.scheduled += 1,
            RefreshReason::InPass => self.in_pass += 1,
            RefreshReason::Relayout => self.relayout += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.scheduled + self.in_pass + self.relayout
    }
}

/// Server-side measurements of one epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub samples: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub wall_seconds: f64,
    pub rotations: usize,
    pub predicted_rotations: usize,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub fwd_out_cts: usize,
    pub boundary_grad_cts: usize,
    pub refreshes: RefreshCounts,
}

/// Public key material as sent in `PUBKEYS`.
pub fn encode_public(backend: &Backend, steps: &[usize]) -> Result<Vec<u8>> {
    match backend {
        Backend::Ckks(_) => {
            let ctx = backend.context().expect("ckks backend");
            let keys = backend.public_keys().expect("ckks backend");
            Ok(serial::serialize_public_keys(ctx, keys))
        }
        Backend::NoiseSim(b) => {
            let noise = b.noise();
            let mut out = Vec::new();
            out.extend_from_slice(SIM_KEYS_MAGIC);
            out.extend_from_slice(&backend.params().digest());
            out.extend_from_slice(&noise.stddev.to_le_bytes());
            out.extend_from_slice(&noise.precision_bits.to_le_bytes());
            out.extend_from_slice(&(steps.len() as u32).to_le_bytes());
            for s in steps {
                out.extend_from_slice(&(*s as u64).to_le_bytes());
            }
            Ok(out)
        }
    }
}

/// Builds the server's evaluation-only backend from a `PUBKEYS` payload.
pub fn decode_public(cfg: &Config, params: &CryptoParams, bytes: &[u8]) -> Result<Backend> {
    match cfg.crypto.backend {
        BackendKind::Ckks => {
            let ctx = Arc::new(CkksContext::new(params.clone()));
            let keys = serial::deserialize_public_keys(&ctx, bytes)?;
            Ok(Backend::ckks_public(ctx, Arc::new(keys)))
        }
        BackendKind::NoiseSim => {
            let mut r = ByteReader::new(bytes);
            r.expect_magic(SIM_KEYS_MAGIC)?;
            if r.take(32)? != params.digest() {
                return Err(Error::KeyMismatch);
            }
            let stddev = r.f64()?;
            let precision_bits = r.u32()?;
            let count = r.u32()? as usize;
            if count > r.remaining() / 8 {
                return Err(r.error(format!("implausible step count {count}")));
            }
            let steps = (0..count).map(|_| r.u64().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
            r.finish()?;
            let noise = NoiseModel { stddev, precision_bits };
            Ok(Backend::noise_sim(params.clone(), noise, &steps).public_view())
        }
    }
}

/// Result of an in-process run.
#[derive(Clone, Debug)]
pub struct LocalRun {
    pub server: ServerReport,
    pub client: ClientReport,
    pub server_traffic: TrafficStats,
}

/// Runs both roles in one process over an in-memory pipe. The server gets
/// the plaintext features unless `encrypt_data` is set.
pub fn run_local(cfg: &Config, data: &Dataset) -> Result<LocalRun> {
    let (a, b) = pipe();
    let session = cfg.protocol.session_id;
    let server_data = ServerData {
        samples: data.len(),
        features: (!cfg.protocol.encrypt_data).then(|| data.features.clone()),
    };
    let server_cfg = cfg.clone();
    let handle = thread::spawn(move || {
        let mut ch = Channel::new(Box::new(a), session);
        let report = server::serve_on(&server_cfg, &server_data, &mut ch);
        (report, ch.stats.clone())
    });
    let client = run_client(cfg, data, Channel::new(Box::new(b), session));
    let (server, server_traffic) = handle.join().map_err(|_| Error::Protocol("server thread panicked".into()))?;
    let server = server?;
    Ok(LocalRun { server, client: client?, server_traffic })
}
