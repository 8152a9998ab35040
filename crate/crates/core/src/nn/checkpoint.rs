//! Binary model checkpoints.
//!
//! ```text
//! "HSCP" | version u32 | config digest [32] | layer count u32
//! per layer: rows u32 | cols u32 | activation u8 [degree u32 | lo f64 | hi f64]
//!            | weights f64 x rows*cols (row-major) | bias f64 x rows
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use super::{chebyshev_fit, Activation, Layer, Target};
use crate::ckks::serial::ByteReader;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"HSCP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_digest: [u8; 32],
    pub layers: Vec<Layer>,
}

pub fn encode(digest: &[u8; 32], layers: &[Layer]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(digest);
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for layer in layers {
        out.extend_from_slice(&(layer.out_size() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.in_size() as u32).to_le_bytes());
        match &layer.activation {
            Activation::Identity => out.push(0),
            Activation::Sigmoid => out.push(1),
            Activation::Poly(p) => {
                out.push(2);
                out.extend_from_slice(&(p.degree as u32).to_le_bytes());
                out.extend_from_slice(&p.interval.0.to_le_bytes());
                out.extend_from_slice(&p.interval.1.to_le_bytes());
            }
        }
        for v in layer.weights.data().iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(format!("unsupported checkpoint version {version}")));
    }
    let mut config_digest = [0u8; 32];
    config_digest.copy_from_slice(r.take(32)?);
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        if rows == 0 || cols == 0 || rows.saturating_mul(cols).saturating_add(rows) > r.remaining() / 8 {
            return Err(r.error(format!("implausible layer shape {rows}x{cols}")));
        }
        let activation = match r.u8()? {
            0 => Activation::Identity,
            1 => Activation::Sigmoid,
            2 => {
                let degree = r.u32()? as usize;
                let (lo, hi) = (r.f64()?, r.f64()?);
                Activation::Poly(Box::new(chebyshev_fit(Target::Sigmoid, degree, lo, hi)?))
            }
            t => return Err(r.error(format!("unknown activation tag {t}"))),
        };
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            weights.push(r.f64()?);
        }
        let mut bias = Vec::with_capacity(rows);
        for _ in 0..rows {
            bias.push(r.f64()?);
        }
        layers.push(Layer { weights: Matrix::from_vec(rows, cols, weights)?, bias, activation });
    }
    r.finish()?;
    for w in layers.windows(2) {
        if w[0].out_size() != w[1].in_size() {
            return Err(Error::Malformed("adjacent layer shapes are incompatible".into()));
        }
    }
    Ok(Checkpoint { config_digest, layers })
}

pub fn save(path: &Path, digest: &[u8; 32], layers: &[Layer]) -> Result<()> {
    std::fs::write(path, encode(digest, layers))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&std::fs::read(path)?)
}
