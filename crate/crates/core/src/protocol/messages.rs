//! Payload encodings.
//!
//! Messages that carry ciphertexts use a bundle:
//! ```text
//! header_len u32 | header (UTF-8 JSON) | count u32 | (len u32 | ciphertext)*
//! ```
//! Ciphertexts use the backend serialization.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::layout::Arrangement;
use super::plan::LayerShape;
use crate::backend::{Backend, HeValue};
use crate::ckks::serial::ByteReader;
use crate::error::{Error, Result};

pub fn encode_bundle<H: Serialize>(backend: &Backend, header: &H, values: &[HeValue]) -> Result<Vec<u8>> {
    let head = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(head.len() + 8 + values.len() * backend.serialized_size(0));
    out.extend_from_slice(&(head.len() as u32).to_le_bytes());
    out.extend_from_slice(&head);
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        let bytes = backend.serialize(v)?;
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}

pub fn decode_bundle<H: DeserializeOwned>(backend: &Backend, payload: &[u8]) -> Result<(H, Vec<HeValue>)> {
    let mut r = ByteReader::new(payload);
    let head_len = r.u32()? as usize;
    let header = serde_json::from_slice(r.take(head_len)?)?;
    let count = r.u32()? as usize;
    if count > r.remaining() / 4 {
        return Err(r.error(format!("implausible ciphertext count {count}")));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        values.push(backend.deserialize(r.take(len)?)?);
    }
    r.finish()?;
    Ok((header, values))
}

pub fn encode_json<H: Serialize>(header: &H) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(header)?)
}

pub fn decode_json<H: DeserializeOwned>(payload: &[u8]) -> Result<H> {
    serde_json::from_slice(payload).map_err(|e| Error::Protocol(format!("bad message header: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsAck {
    pub layers: Vec<LayerShape>,
    pub level: usize,
}

/// Server output for one batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardHeader {
    pub epoch: usize,
    pub batch: usize,
    pub arrangement: Arrangement,
    /// Scale the boundary delta must be encrypted at.
    pub grad_scale: f64,
    /// Row-major `samples x inputs` batch, only with the literal gradient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientHeader {
    pub batch: usize,
    pub arrangement: Arrangement,
    /// Set when the ciphertexts hold a full weight gradient in the weight
    /// layout (literal gradient mode).
    #[serde(default)]
    pub weight_gradient: bool,
}

/// Server asks for the encrypted inputs of a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataRequest {
    pub epoch: usize,
    pub batch: usize,
    pub arrangement: Arrangement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefreshReason {
    /// Periodic weight refresh.
    Scheduled,
    /// A ciphertext lacks the levels for the next operation.
    InPass,
    /// Re-arrangement of an intermediate result between layers.
    Relayout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefreshTarget {
    pub arrangement: Arrangement,
    pub scale: f64,
}

/// One group of ciphertexts to refresh. The `source` arrangement says how
/// to read them; each target is filled from the same data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefreshItem {
    pub source: Arrangement,
    pub targets: Vec<RefreshTarget>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefreshRequest {
    pub reason: RefreshReason,
    pub items: Vec<RefreshItem>,
}

/// Client's per-epoch report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub samples: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// End of the run; carries the final server weights for the key holder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Farewell {
    pub layers: Vec<LayerShape>,
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::backend::NoiseModel;
    use crate::ckks::CryptoParams;

    #[test]
    fn bundle_round_trip() {
        let b = Backend::noise_sim(CryptoParams::new(10, 120, 30).unwrap(), NoiseModel::exact(), &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cts: Vec<HeValue> = (0..3).map(|i| b.encrypt(&[i as f64, 0.5], None, &mut rng).unwrap()).collect();
        let header = GradientHeader {
            batch: 4,
            arrangement: Arrangement::Packed { features: 2, samples: 3, block: 4 },
            weight_gradient: false,
        };
        let bytes = encode_bundle(&b, &header, &cts).unwrap();
        let (h, back): (GradientHeader, _) = decode_bundle(&b, &bytes).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, cts);
        assert!(decode_bundle::<GradientHeader>(&b, &bytes[..bytes.len() - 2]).is_err());
        let mut extra = bytes.clone();
        extra.push(1);
        assert!(decode_bundle::<GradientHeader>(&b, &extra).is_err());
    }
}
