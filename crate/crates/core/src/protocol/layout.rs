//! Slot arrangements of a `features x samples` matrix across ciphertexts.
//!
//! Samples are grouped `width / block` at a time; group `g` covers samples
//! `g * cpc .. (g + 1) * cpc` and sample `g * cpc + k` owns block `k`
//! (slots `k * block .. (k + 1) * block`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arrangement {
    /// One ciphertext per group; block `k` starts with the sample's column.
    Packed { features: usize, samples: usize, block: usize },
    /// Ciphertext `j * groups + g`; block `k` is filled with entry `(j, s)`.
    Expanded { features: usize, samples: usize, block: usize },
    /// Ciphertext `j * groups + g`; entry `(j, s)` sits at the first slot
    /// of block `k`, other slots are unspecified.
    Marked { features: usize, samples: usize, block: usize },
    /// Opaque vectors that are re-encrypted slot for slot.
    Raw { count: usize },
}

impl Arrangement {
    pub fn validate(&self, width: usize) -> Result<()> {
        match *self {
            Arrangement::Raw { .. } => Ok(()),
            Arrangement::Packed { features, block, .. } if features > block => {
                Err(Error::Dimension(format!("{features} features do not fit a block of {block}")))
            }
            Arrangement::Packed { block, .. }
            | Arrangement::Expanded { block, .. }
            | Arrangement::Marked { block, .. } => {
                if block == 0 || block > width || !width.is_multiple_of(block) {
                    Err(Error::Dimension(format!("block {block} does not tile width {width}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        match *self {
            Arrangement::Packed { features, samples, block }
            | Arrangement::Expanded { features, samples, block }
            | Arrangement::Marked { features, samples, block } => (features, samples, block),
            Arrangement::Raw { .. } => (0, 0, 1),
        }
    }

    /// Samples per ciphertext.
    pub fn per_ct(&self, width: usize) -> usize {
        width / self.dims().2
    }

    pub fn groups(&self, width: usize) -> usize {
        let (_, samples, _) = self.dims();
        samples.div_ceil(self.per_ct(width))
    }

    pub fn ct_count(&self, width: usize) -> usize {
        match *self {
            Arrangement::Raw { count } => count,
            Arrangement::Packed { .. } => self.groups(width),
            Arrangement::Expanded { features, .. } | Arrangement::Marked { features, .. } => {
                features * self.groups(width)
            }
        }
    }

    /// `(ciphertext, slot)` that carries entry `(j, s)`, for readable
    /// arrangements.
    fn position(&self, j: usize, s: usize, width: usize) -> (usize, usize) {
        let (_, _, block) = self.dims();
        let cpc = self.per_ct(width);
        let (g, k) = (s / cpc, s % cpc);
        match self {
            Arrangement::Packed { .. } => (g, k * block + j),
            _ => (j * self.groups(width) + g, k * block),
        }
    }

    /// Lays out `m` (`features x samples`) as plaintext vectors of `width` slots.
    pub fn scatter(&self, m: &Matrix, width: usize) -> Result<Vec<Vec<f64>>> {
        self.validate(width)?;
        let (features, samples, block) = self.dims();
        if matches!(self, Arrangement::Raw { .. }) || m.shape() != (features, samples) {
            return Err(Error::Dimension(format!("cannot scatter {:?} as {self:?}", m.shape())));
        }
        let mut out = vec![vec![0.0; width]; self.ct_count(width)];
        for j in 0..features {
            for s in 0..samples {
                let (c, slot) = self.position(j, s, width);
                let v = m.get(j, s);
                if matches!(self, Arrangement::Expanded { .. }) {
                    out[c][slot..slot + block].fill(v);
                } else {
                    out[c][slot] = v;
                }
            }
        }
        Ok(out)
    }

    /// Reads the `features x samples` matrix back from decrypted vectors.
    pub fn gather(&self, vectors: &[Vec<f64>], width: usize) -> Result<Matrix> {
        self.validate(width)?;
        let (features, samples, _) = self.dims();
        if matches!(self, Arrangement::Raw { .. }) || vectors.len() != self.ct_count(width) {
            return Err(Error::Dimension(format!("{} vectors do not match {self:?}", vectors.len())));
        }
        Ok(Matrix::from_fn(features, samples, |j, s| {
            let (c, slot) = self.position(j, s, width);
            vectors[c][slot]
        }))
    }

    /// Per ciphertext, 1.0 on slots that belong to an existing entry.
    pub fn mask(&self, width: usize) -> Vec<Vec<f64>> {
        let (features, samples, block) = self.dims();
        let mut out = vec![vec![0.0; width]; self.ct_count(width)];
        for j in 0..features {
            for s in 0..samples {
                let (c, slot) = self.position(j, s, width);
                let span = if matches!(self, Arrangement::Expanded { .. }) { block } else { 1 };
                out[c][slot..slot + span].fill(1.0);
            }
        }
        out
    }

    /// For `Packed`: 1.0 in the slot right after each existing sample's
    /// column (the constant input feeding the next layer's bias).
    pub fn bias_slots(&self, width: usize) -> Result<Vec<Vec<f64>>> {
        match *self {
            Arrangement::Packed { features, samples, block } if features < block => {
                let mut out = vec![vec![0.0; width]; self.ct_count(width)];
                for s in 0..samples {
                    let (c, slot) = self.position(features - 1, s, width);
                    out[c][slot + 1] = 1.0;
                }
                Ok(out)
            }
            _ => Err(Error::Dimension(format!("{self:?} has no bias slot"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn packed_positions() {
        let a = Arrangement::Packed { features: 3, samples: 5, block: 4 };
        assert_eq!(a.ct_count(8), 3);
        let m = Matrix::from_fn(3, 5, |j, s| (10 * s + j) as f64);
        let v = a.scatter(&m, 8).unwrap();
        assert_eq!(v[0], vec![0.0, 1.0, 2.0, 0.0, 10.0, 11.0, 12.0, 0.0]);
        assert_eq!(v[2][..4], [40.0, 41.0, 42.0, 0.0]);
        assert_eq!(v[2][4..], [0.0; 4]);
        let bias = a.bias_slots(8).unwrap();
        assert_eq!(bias[0], vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(bias[2][7], 0.0);
    }

    #[test]
    fn expanded_and_marked_positions() {
        let a = Arrangement::Expanded { features: 2, samples: 3, block: 4 };
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let v = a.scatter(&m, 8).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v[0], vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(v[1], vec![3.0, 3.0, 3.0, 3.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(v[2][0], 4.0);
        assert_eq!(a.mask(8)[1], vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);

        let marked = Arrangement::Marked { features: 2, samples: 3, block: 4 };
        let mut noisy = v.clone();
        noisy[0][1] = 99.0;
        assert_eq!(marked.gather(&noisy, 8).unwrap(), m);
        assert_eq!(marked.mask(8)[0], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Arrangement::Packed { features: 5, samples: 1, block: 4 }.validate(8).is_err());
        assert!(Arrangement::Expanded { features: 1, samples: 1, block: 3 }.validate(8).is_err());
        let a = Arrangement::Packed { features: 2, samples: 2, block: 4 };
        assert!(a.scatter(&Matrix::zeros(3, 2), 8).is_err());
        assert!(a.gather(&[vec![0.0; 8], vec![0.0; 8]], 8).is_err());
        assert!(Arrangement::Expanded { features: 4, samples: 1, block: 4 }.bias_slots(8).is_err());
    }

    proptest! {
        #[test]
        fn scatter_gather_round_trip(
            features in 1usize..6, samples in 1usize..20, block_log in 3u32..5, kind in 0u8..3,
        ) {
            let width = 32;
            let block = 1usize << block_log;
            let a = match kind {
                0 => Arrangement::Packed { features, samples, block },
                1 => Arrangement::Expanded { features, samples, block },
                _ => Arrangement::Marked { features, samples, block },
            };
            let m = Matrix::from_fn(features, samples, |j, s| (j * 31 + s) as f64 * 0.5 + 1.0);
            let v = a.scatter(&m, width).unwrap();
            prop_assert_eq!(v.len(), a.ct_count(width));
            prop_assert_eq!(a.gather(&v, width).unwrap(), m);
            let nonzero: usize = v.iter().flatten().filter(|x| **x != 0.0).count();
            let masked: usize = a.mask(width).iter().flatten().filter(|x| **x != 0.0).count();
            prop_assert_eq!(nonzero, masked);
        }
    }
}
