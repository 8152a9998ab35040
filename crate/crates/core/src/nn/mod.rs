//! Plaintext fully connected networks.
//!
//! Layer `l` computes `O_l = psi(Z_l)` with `Z_l = O_{l-1} W_l^T + B_l`, where
//! samples are rows and `W_l` is `out x in`.

pub mod checkpoint;
pub mod poly;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
pub use poly::{chebyshev_fit, eval_poly_encrypted, eval_poly_with, PolyApprox, PolyEvalOptions, Target};

/// Activation as written in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationSpec {
    Identity,
    Sigmoid,
    ApproxSigmoid { degree: usize, lo: f64, hi: f64 },
}

impl ActivationSpec {
    pub fn resolve(self) -> Result<Activation> {
        Ok(match self {
            ActivationSpec::Identity => Activation::Identity,
            ActivationSpec::Sigmoid => Activation::Sigmoid,
            ActivationSpec::ApproxSigmoid { degree, lo, hi } => {
                Activation::Poly(Box::new(chebyshev_fit(Target::Sigmoid, degree, lo, hi)?))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Sigmoid,
    Poly(Box<PolyApprox>),
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => poly::sigmoid(z),
            Activation::Poly(p) => p.eval(z),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = poly::sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Poly(p) => p.derivative(z),
        }
    }

    pub fn poly(&self) -> Option<&PolyApprox> {
        match self {
            Activation::Poly(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_size(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_size(&self) -> usize {
        self.weights.rows()
    }

    /// Pre-activations for a batch with samples as rows.
    pub fn pre_activation(&self, input: &Matrix) -> Result<Matrix> {
        let mut z = input.matmul(&self.weights.transpose())?;
        for i in 0..z.rows() {
            for (v, b) in z.data_mut()[i * self.out_size()..(i + 1) * self.out_size()]
                .iter_mut()
                .zip(&self.bias)
            {
                *v += b;
            }
        }
        Ok(z)
    }
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights and zero biases; layer
/// `l` draws from its own stream derived from `(seed, l)`.
pub fn init_layers(sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Vec<Layer>> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidParams(format!("bad layer sizes {sizes:?}")));
    }
    if activations.len() != sizes.len() - 1 {
        return Err(Error::InvalidParams(format!(
            "{} activations for {} layers",
            activations.len(),
            sizes.len() - 1
        )));
    }
    Ok(sizes
        .windows(2)
        .zip(activations)
        .enumerate()
        .map(|(l, (w, act))| {
            let mut rng = ChaCha8Rng::seed_from_u64(layer_seed(seed, l));
            let bound = 1.0 / (w[0] as f64).sqrt();
            Layer {
                weights: Matrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..=bound)),
                bias: vec![0.0; w[1]],
                activation: act.clone(),
            }
        })
        .collect())
}

pub fn layer_seed(seed: u64, layer: usize) -> u64 {
    splitmix(seed ^ splitmix(layer as u64 + 1))
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Intermediate values of a forward pass over a contiguous run of layers.
#[derive(Clone, Debug)]
pub struct Trace {
    pub input: Matrix,
    pub pre: Vec<Matrix>,
    pub post: Vec<Matrix>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.post.last().unwrap_or(&self.input)
    }
}

pub fn forward(layers: &[Layer], input: &Matrix) -> Result<Trace> {
    let mut pre = Vec::with_capacity(layers.len());
    let mut post: Vec<Matrix> = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let x = post.last().unwrap_or(input);
        let z = layer.pre_activation(x)?;
        let mut o = z.clone();
        o.data_mut().iter_mut().for_each(|v| *v = layer.activation.apply(*v));
        check_finite(&o, || format!("activations of layer {}", l + 1))?;
        pre.push(z);
        post.push(o);
    }
    Ok(Trace { input: input.clone(), pre, post })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    /// `dJ/dZ_l` for each layer of the run.
    pub deltas: Vec<Matrix>,
    /// `dJ/dO` for the run's input.
    pub input_grad: Matrix,
}

/// Backpropagates `dJ/dO` of the run's last output.
pub fn backward(layers: &[Layer], trace: &Trace, output_grad: &Matrix) -> Result<Gradients> {
    if trace.pre.len() != layers.len() || output_grad.shape() != trace.output().shape() {
        return Err(Error::Dimension("trace does not match the layers".into()));
    }
    let n = layers.len();
    let mut weights = vec![Matrix::zeros(0, 0); n];
    let mut biases = vec![Vec::new(); n];
    let mut deltas = vec![Matrix::zeros(0, 0); n];
    let mut upstream = output_grad.clone();
    for l in (0..n).rev() {
        let layer = &layers[l];
        let mut delta = upstream;
        for (d, &z) in delta.data_mut().iter_mut().zip(trace.pre[l].data()) {
            *d *= layer.activation.derivative(z);
        }
        let x = if l == 0 { &trace.input } else { &trace.post[l - 1] };
        let dt = delta.transpose();
        weights[l] = dt.matmul(x)?;
        biases[l] = (0..dt.rows()).map(|i| dt.row(i).iter().sum()).collect();
        upstream = delta.matmul(&layer.weights)?;
        check_finite(&weights[l], || format!("gradient of layer {}", l + 1))?;
        deltas[l] = delta;
    }
    Ok(Gradients { weights, biases, deltas, input_grad: upstream })
}

pub fn sgd_update(layers: &mut [Layer], grads: &Gradients, lr: f64) -> Result<()> {
    if grads.weights.len() != layers.len() {
        return Err(Error::Dimension("gradient count differs from layer count".into()));
    }
    for (layer, (gw, gb)) in layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
        if gw.shape() != layer.weights.shape() || gb.len() != layer.bias.len() {
            return Err(Error::Dimension("gradient shape differs from layer shape".into()));
        }
        for (w, g) in layer.weights.data_mut().iter_mut().zip(gw.data()) {
            *w -= lr * g;
        }
        for (b, g) in layer.bias.iter_mut().zip(gb) {
            *b -= lr * g;
        }
    }
    Ok(())
}

fn check_finite(m: &Matrix, what: impl FnOnce() -> String) -> Result<()> {
    match m.data().iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Numerical(format!(
            "non-finite value {} in {} at ({}, {})",
            m.data()[i],
            what(),
            i / m.cols().max(1),
            i % m.cols().max(1)
        ))),
        None => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `J = (1/b) sum (yhat - y)^2`.
    #[default]
    Mse,
    /// Softmax over the outputs followed by `-(1/b) sum y log p`.
    CrossEntropy,
}

impl Loss {
    pub fn value(self, pred: &Matrix, target: &Matrix) -> Result<f64> {
        same_shape(pred, target)?;
        let b = pred.rows() as f64;
        let v = match self {
            Loss::Mse => pred.data().iter().zip(target.data()).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / b,
            Loss::CrossEntropy => {
                let p = softmax_rows(pred);
                -p.data().iter().zip(target.data()).map(|(p, y)| y * p.max(1e-300).ln()).sum::<f64>() / b
            }
        };
        if !v.is_finite() {
            return Err(Error::Numerical(format!("loss is {v}")));
        }
        Ok(v)
    }

    /// `dJ/dYhat`.
    pub fn gradient(self, pred: &Matrix, target: &Matrix) -> Result<Matrix> {
        same_shape(pred, target)?;
        let b = pred.rows() as f64;
        let mut g = match self {
            Loss::Mse => pred.clone(),
            Loss::CrossEntropy => softmax_rows(pred),
        };
        let factor = match self {
            Loss::Mse => 2.0 / b,
            Loss::CrossEntropy => 1.0 / b,
        };
        for (d, y) in g.data_mut().iter_mut().zip(target.data()) {
            *d = factor * (*d - y);
        }
        Ok(g)
    }
}

fn same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    let cols = m.cols();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// Predicted class per row: argmax, or a 0.5 threshold for a single output.
pub fn predict_classes(pred: &Matrix) -> Vec<usize> {
    (0..pred.rows())
        .map(|i| {
            let row = pred.row(i);
            if row.len() == 1 {
                usize::from(row[0] >= 0.5)
            } else {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                    .0
            }
        })
        .collect()
}

pub fn accuracy(pred: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predict_classes(pred).iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

/// One forward/backward/update step on a full network.
pub fn train_step(layers: &mut [Layer], x: &Matrix, y: &Matrix, loss: Loss, lr: f64) -> Result<f64> {
    let trace = forward(layers, x)?;
    let j = loss.value(trace.output(), y)?;
    let g = loss.gradient(trace.output(), y)?;
    let grads = backward(layers, &trace, &g)?;
    sgd_update(layers, &grads, lr)?;
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};
    use rand::Rng;

    fn net(act: Activation, seed: u64) -> Vec<Layer> {
        let mut layers = init_layers(&[4, 3, 2], &[act.clone(), act], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 77);
        for l in &mut layers {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        layers
    }

    fn loss_of(layers: &[Layer], x: &Matrix, y: &Matrix, loss: Loss) -> f64 {
        loss.value(forward(layers, x).unwrap().output(), y).unwrap()
    }

    /// Central differences over every parameter against backprop.
    fn gradient_check(act: Activation, loss: Loss) -> f64 {
        let mut worst: f64 = 0.0;
        for point in 0..10u64 {
            let layers = net(act.clone(), point);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + point);
            let x = Matrix::from_fn(5, 4, |_, _| rng.random_range(-2.0..2.0));
            let y = Matrix::from_fn(5, 2, |i, j| if (i + j) % 2 == 0 { 1.0 } else { 0.0 });
            let trace = forward(&layers, &x).unwrap();
            let g = loss.gradient(trace.output(), &y).unwrap();
            let grads = backward(&layers, &trace, &g).unwrap();
            let h = 1e-5;
            for l in 0..layers.len() {
                let (rows, cols) = layers[l].weights.shape();
                for k in 0..rows * cols + rows {
                    let perturbed = |delta: f64| {
                        let mut m = layers.clone();
                        if k < rows * cols {
                            m[l].weights.data_mut()[k] += delta;
                        } else {
                            m[l].bias[k - rows * cols] += delta;
                        }
                        loss_of(&m, &x, &y, loss)
                    };
                    let numeric = (perturbed(h) - perturbed(-h)) / (2.0 * h);
                    let analytic = if k < rows * cols {
                        grads.weights[l].data()[k]
                    } else {
                        grads.biases[l][k - rows * cols]
                    };
                    let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3);
                    worst = worst.max(rel);
                }
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let approx = ActivationSpec::ApproxSigmoid { degree: 7, lo: -15.0, hi: 15.0 }.resolve().unwrap();
        for act in [Activation::Sigmoid, approx, Activation::Identity] {
            let err = gradient_check(act.clone(), Loss::Mse);
            assert!(err < 1e-4, "{act:?}: {err}");
        }
        assert!(gradient_check(Activation::Sigmoid, Loss::CrossEntropy) < 1e-4);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let layers = net(Activation::Sigmoid, 3);
        let x = Matrix::from_fn(2, 4, |i, j| 0.3 * i as f64 - 0.2 * j as f64);
        let y = Matrix::from_fn(2, 2, |i, j| (i == j) as u8 as f64);
        let trace = forward(&layers, &x).unwrap();
        let grads = backward(&layers, &trace, &Loss::Mse.gradient(trace.output(), &y).unwrap()).unwrap();
        for k in 0..8 {
            let at = |d: f64| {
                let mut xp = x.clone();
                xp.data_mut()[k] += d;
                loss_of(&layers, &xp, &y, Loss::Mse)
            };
            let numeric = (at(1e-6) - at(-1e-6)) / 2e-6;
            assert!((numeric - grads.input_grad.data()[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn linear_unit_closed_form() {
        let (w, x, y, lr) = (0.7, 1.5, 2.0, 0.1);
        let mut layers = vec![Layer {
            weights: Matrix::from_vec(1, 1, vec![w]).unwrap(),
            bias: vec![0.0],
            activation: Activation::Identity,
        }];
        let xm = Matrix::from_vec(1, 1, vec![x]).unwrap();
        let ym = Matrix::from_vec(1, 1, vec![y]).unwrap();
        let trace = forward(&layers, &xm).unwrap();
        let grads = backward(&layers, &trace, &Loss::Mse.gradient(trace.output(), &ym).unwrap()).unwrap();
        let mut g = grads.clone();
        g.biases[0][0] = 0.0;
        sgd_update(&mut layers, &g, lr).unwrap();
        let expected = w - lr * 2.0 * (w * x - y) * x;
        assert!((layers[0].weights.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_leaves_model_unchanged() {
        let mut layers = net(Activation::Sigmoid, 5);
        let before = layers.clone();
        let x = Matrix::from_fn(3, 4, |i, j| (i * j) as f64);
        let y = Matrix::zeros(3, 2);
        train_step(&mut layers, &x, &y, Loss::Mse, 0.0).unwrap();
        assert_eq!(layers, before);
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Matrix::from_fn(200, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = Matrix::from_fn(200, 2, |i, j| {
            let pos = x.get(i, 0) + x.get(i, 1) > 0.0;
            f64::from(u8::from(pos == (j == 0)))
        });
        let mut layers =
            init_layers(&[2, 4, 2], &[Activation::Sigmoid, Activation::Sigmoid], 1).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            let j = train_step(&mut layers, &x, &y, Loss::Mse, 0.1).unwrap();
            assert!(j < last);
            last = j;
        }
    }

    #[test]
    fn nan_is_reported() {
        let mut layers = net(Activation::Identity, 1);
        layers[0].weights.set(0, 0, f64::NAN);
        let x = Matrix::from_fn(1, 4, |_, _| 1.0);
        assert!(matches!(forward(&layers, &x), Err(Error::Numerical(_))));
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let a = init_layers(&[9, 5, 3], &[Activation::Sigmoid, Activation::Sigmoid], 4).unwrap();
        let b = init_layers(&[9, 5, 3], &[Activation::Sigmoid, Activation::Sigmoid], 4).unwrap();
        assert_eq!(a, b);
        assert!(a[0].weights.data().iter().all(|w| w.abs() <= 1.0 / 3.0));
        assert!(a[1].bias.iter().all(|&v| v == 0.0));
        assert!(init_layers(&[3, 0], &[Activation::Sigmoid], 0).is_err());
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(v in proptest::collection::vec(-30.0f64..30.0, 6)) {
            let m = Matrix::from_vec(2, 3, v).unwrap();
            let s = softmax_rows(&m);
            for i in 0..2 {
                prop_assert!((s.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn mse_gradient_is_linear_in_error(p in -5.0f64..5.0, y in -5.0f64..5.0) {
            let pm = Matrix::from_vec(1, 1, vec![p]).unwrap();
            let ym = Matrix::from_vec(1, 1, vec![y]).unwrap();
            let g = Loss::Mse.gradient(&pm, &ym).unwrap();
            prop_assert!((g.get(0, 0) - 2.0 * (p - y)).abs() < 1e-12);
        }
    }
}
