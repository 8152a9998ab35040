//! Geometry of the encrypted server segment: slot layouts per layer,
//! rotation steps, per-batch rotation and ciphertext counts.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::layout::Arrangement;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::poly::levels_for_degree;
use crate::packing::{choose_packing, padded_len, PackingChoice};

/// How one server layer is packed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerShape {
    /// Hidden server layer: one ciphertext per output neuron holding the
    /// row `[w_r | b_r]` replicated in every block of `block` slots.
    Rows { inputs: usize, outputs: usize, block: usize },
    /// Last server layer: one ciphertext per input (plus one for the bias)
    /// holding that weight column replicated in every block.
    Columns { inputs: usize, outputs: usize, block: usize, packing: PackingChoice },
}

impl LayerShape {
    pub fn inputs(&self) -> usize {
        match *self {
            LayerShape::Rows { inputs, .. } | LayerShape::Columns { inputs, .. } => inputs,
        }
    }

    pub fn outputs(&self) -> usize {
        match *self {
            LayerShape::Rows { outputs, .. } | LayerShape::Columns { outputs, .. } => outputs,
        }
    }

    pub fn block(&self) -> usize {
        match *self {
            LayerShape::Rows { block, .. } | LayerShape::Columns { block, .. } => block,
        }
    }

    pub fn ct_count(&self) -> usize {
        match *self {
            LayerShape::Rows { outputs, .. } => outputs,
            LayerShape::Columns { inputs, .. } => inputs + 1,
        }
    }

    /// Plaintext vectors for weights `w` (`outputs x inputs`) and `bias`.
    pub fn encode(&self, w: &Matrix, bias: &[f64], width: usize) -> Result<Vec<Vec<f64>>> {
        if w.shape() != (self.outputs(), self.inputs()) || bias.len() != self.outputs() {
            return Err(Error::Dimension(format!("weights {:?} do not match {self:?}", w.shape())));
        }
        let block = self.block();
        let entry = |r: usize, i: usize| if i < self.inputs() { w.get(r, i) } else { bias[r] };
        Ok((0..self.ct_count())
            .map(|c| {
                let mut v = vec![0.0; width];
                for chunk in v.chunks_mut(block) {
                    match self {
                        LayerShape::Rows { inputs, .. } => {
                            for i in 0..=*inputs {
                                chunk[i] = entry(c, i);
                            }
                        }
                        LayerShape::Columns { outputs, .. } => {
                            for r in 0..*outputs {
                                chunk[r] = entry(r, c);
                            }
                        }
                    }
                }
                v
            })
            .collect())
    }

    /// Inverse of [`LayerShape::encode`], reading the first block.
    pub fn decode(&self, vectors: &[Vec<f64>]) -> Result<(Matrix, Vec<f64>)> {
        if vectors.len() != self.ct_count() {
            return Err(Error::Dimension(format!("{} vectors for {self:?}", vectors.len())));
        }
        let (o, i) = (self.outputs(), self.inputs());
        let at = |r: usize, c: usize| match self {
            LayerShape::Rows { .. } => vectors[r][c],
            LayerShape::Columns { .. } => vectors[c][r],
        };
        Ok((Matrix::from_fn(o, i, &at), (0..o).map(|r| at(r, i)).collect()))
    }
}

/// Layer shapes of the server segment for one slot width and batch size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub layers: Vec<LayerShape>,
    pub width: usize,
    pub batch_size: usize,
}

impl SplitPlan {
    /// `sizes` is the full layer-size list, `split` the number of server
    /// weight layers.
    pub fn new(sizes: &[usize], split: usize, width: usize, batch_size: usize, threshold: f64) -> Result<Self> {
        if split == 0 || split >= sizes.len() {
            return Err(Error::Config(format!("split {split} out of range for {} sizes", sizes.len())));
        }
        let mut layers = Vec::with_capacity(split);
        for l in 0..split {
            let (inputs, outputs) = (sizes[l], sizes[l + 1]);
            let shape = if l + 1 < split {
                let block = padded_len(inputs + 1);
                if block > width {
                    return Err(Error::Dimension(format!(
                        "hidden server layer with {inputs} inputs needs {block} slots per sample, only {width} available"
                    )));
                }
                LayerShape::Rows { inputs, outputs, block }
            } else {
                let packing = choose_packing(outputs, width, threshold);
                let block = match packing {
                    PackingChoice::Batch => padded_len(outputs),
                    PackingChoice::Scalar => width,
                };
                if outputs > width || block > width {
                    return Err(Error::Dimension(format!(
                        "last server layer of {outputs} outputs does not fit {width} slots"
                    )));
                }
                LayerShape::Columns { inputs, outputs, block, packing }
            };
            layers.push(shape);
        }
        Ok(SplitPlan { layers, width, batch_size })
    }

    pub fn split(&self) -> usize {
        self.layers.len()
    }

    pub fn last(&self) -> &LayerShape {
        self.layers.last().expect("at least one server layer")
    }

    /// Arrangement of the server output (and of the boundary delta).
    pub fn output_arrangement(&self, samples: usize) -> Arrangement {
        let last = self.last();
        Arrangement::Packed { features: last.outputs(), samples, block: last.block() }
    }

    /// Arrangement of the inputs of layer `l`. The bias input is part of
    /// `Packed` columns (one extra feature) and implicit for `Expanded`.
    pub fn input_arrangement(&self, l: usize, samples: usize) -> Arrangement {
        match self.layers[l] {
            LayerShape::Rows { inputs, block, .. } => {
                Arrangement::Packed { features: inputs + 1, samples, block }
            }
            LayerShape::Columns { inputs, block, .. } => Arrangement::Expanded { features: inputs, samples, block },
        }
    }

    /// Arrangement of per-neuron deltas of hidden layer `l`: entry
    /// `(r, s)` spread over sample `s`'s block of the layer input.
    pub fn delta_arrangement(&self, l: usize, samples: usize) -> Arrangement {
        let shape = self.layers[l];
        Arrangement::Expanded { features: shape.outputs(), samples, block: shape.block() }
    }

    /// Rotation steps the server needs keys for.
    pub fn rotation_steps(&self) -> Vec<usize> {
        let mut steps = BTreeSet::new();
        let mut add_range = |from: usize, to: usize| {
            let mut s = from;
            while s < to {
                steps.insert(s);
                s *= 2;
            }
        };
        for (l, shape) in self.layers.iter().enumerate() {
            let block = shape.block();
            add_range(block, self.width);
            if matches!(shape, LayerShape::Rows { .. }) || l > 0 {
                add_range(1, block);
            }
        }
        steps.into_iter().collect()
    }

    pub fn fwd_out_count(&self, samples: usize) -> usize {
        self.output_arrangement(samples).ct_count(self.width)
    }

    /// Rotations the server performs for one batch of `samples`.
    pub fn rotations_per_batch(&self, samples: usize, literal_gradient: bool) -> usize {
        let n = self.split();
        let mut total = 0;
        for (l, shape) in self.layers.iter().enumerate() {
            let block = shape.block();
            let in_block = block.trailing_zeros() as usize;
            let fold = (self.width / block).trailing_zeros() as usize;
            let groups = samples.div_ceil(self.width / block);
            match *shape {
                LayerShape::Rows { outputs, .. } => {
                    total += outputs * groups * in_block;
                    total += outputs * fold;
                }
                LayerShape::Columns { inputs, .. } => {
                    if !literal_gradient {
                        total += (inputs + 1) * fold;
                    }
                    if l > 0 && l + 1 == n {
                        total += inputs * groups * in_block;
                    }
                }
            }
        }
        total
    }

    pub fn rotations_per_epoch(&self, samples: usize, literal_gradient: bool) -> usize {
        let full = samples / self.batch_size;
        let rest = samples % self.batch_size;
        full * self.rotations_per_batch(self.batch_size, literal_gradient)
            + if rest > 0 { self.rotations_per_batch(rest, literal_gradient) } else { 0 }
    }

    pub fn fwd_out_per_epoch(&self, samples: usize) -> usize {
        let full = samples / self.batch_size;
        let rest = samples % self.batch_size;
        full * self.fwd_out_count(self.batch_size) + if rest > 0 { self.fwd_out_count(rest) } else { 0 }
    }
}

/// The refresh trigger: `ceil(log2(d+1)) * n + n > L`. `degree = None`
/// means the server evaluates no activation.
pub fn refresh_needed(degree: Option<usize>, split: usize, level_budget: usize) -> bool {
    let per_layer = degree.map_or(0, levels_for_degree);
    per_layer * split + split > level_budget
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_one_geometry() {
        let plan = SplitPlan::new(&[784, 128, 32, 10], 1, 4096, 64, 2.7).unwrap();
        assert_eq!(
            plan.layers[0],
            LayerShape::Columns { inputs: 784, outputs: 128, block: 256, packing: PackingChoice::Batch }
        );
        assert_eq!(plan.fwd_out_count(64), 4);
        assert_eq!(plan.fwd_out_count(60), 4);
        assert_eq!(plan.fwd_out_count(16), 1);
        assert_eq!(plan.fwd_out_per_epoch(10_000), 156 * 4 + 1);
        assert_eq!(plan.rotation_steps(), vec![256, 512, 1024, 2048]);
        assert_eq!(plan.rotations_per_batch(64, false), 785 * 4);
        assert_eq!(plan.rotations_per_batch(64, true), 0);
    }

    #[test]
    fn scalar_and_hidden_layers() {
        let plan = SplitPlan::new(&[9, 2000, 2], 1, 4096, 8, 2.7).unwrap();
        assert_eq!(plan.last().block(), 4096);
        assert_eq!(plan.fwd_out_count(8), 8);
        assert_eq!(plan.rotations_per_batch(8, false), 0);

        let plan = SplitPlan::new(&[9, 128, 32, 2], 2, 4096, 60, 2.7).unwrap();
        assert_eq!(plan.layers[0], LayerShape::Rows { inputs: 9, outputs: 128, block: 16 });
        assert_eq!(plan.layers[1].block(), 64);
        // rows: 128 * 1 group * 4 + 128 * 8; columns: 129 * 6 + 128 * 1 * 6
        assert_eq!(plan.rotations_per_batch(60, false), 128 * 4 + 128 * 8 + 129 * 6 + 128 * 6);
        assert!(SplitPlan::new(&[8192, 8192, 10], 2, 4096, 60, 2.7).is_err());
        assert!(SplitPlan::new(&[4, 3], 1, 8, 1, 2.7).is_ok());
        assert!(SplitPlan::new(&[4, 3], 0, 8, 1, 2.7).is_err());
    }

    #[test]
    fn weight_codec_round_trip() {
        let w = Matrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
        let b = vec![10.0, 11.0, 12.0];
        for shape in [
            LayerShape::Rows { inputs: 2, outputs: 3, block: 4 },
            LayerShape::Columns { inputs: 2, outputs: 3, block: 4, packing: PackingChoice::Batch },
        ] {
            let v = shape.encode(&w, &b, 16).unwrap();
            assert_eq!(v.len(), shape.ct_count());
            assert_eq!(v[0][..4], v[0][12..]);
            let (w2, b2) = shape.decode(&v).unwrap();
            assert_eq!((w2, b2), (w.clone(), b.clone()));
        }
        let rows = LayerShape::Rows { inputs: 2, outputs: 3, block: 4 }.encode(&w, &b, 8).unwrap();
        assert_eq!(rows[1], vec![2.0, 3.0, 11.0, 0.0, 2.0, 3.0, 11.0, 0.0]);
    }

    #[test]
    fn refresh_rule() {
        assert!(refresh_needed(Some(7), 3, 4));
        assert!(!refresh_needed(None, 1, 5));
        assert!(!refresh_needed(Some(7), 1, 5));
        assert!(refresh_needed(Some(7), 2, 5));
        assert!(!refresh_needed(Some(3), 2, 6));
    }
}
