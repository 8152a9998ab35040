//! Polynomial activation approximations and their encrypted evaluation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, HeValue};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Sigmoid,
}

impl Target {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Target::Sigmoid => sigmoid(x),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Levels consumed by evaluating a degree-`d` polynomial with binary powering.
pub fn levels_for_degree(d: usize) -> usize {
    (usize::BITS - d.leading_zeros()) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Powers of the original variable `x`, not of the interval-mapped one.
    Monomial,
}

/// Chebyshev interpolant of a target function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyApprox {
    pub target: Target,
    pub degree: usize,
    pub interval: (f64, f64),
    pub basis: Basis,
    /// `coefficients[k]` multiplies `x^k`.
    pub coefficients: Vec<f64>,
    /// Maximum `|poly(x) - target(x)|` over a dense grid of the interval.
    pub error_bound: f64,
    pub levels_consumed: usize,
}

pub const ERROR_GRID_POINTS: usize = 100_000;

/// Interpolates `target` at the `degree + 1` Chebyshev nodes of `[lo, hi]`.
pub fn chebyshev_fit(target: Target, degree: usize, lo: f64, hi: f64) -> Result<PolyApprox> {
    if degree == 0 {
        return Err(Error::InvalidParams("degree must be at least 1".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParams(format!("degenerate interval [{lo}, {hi}]")));
    }
    let n = degree + 1;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let nodes: Vec<f64> = (0..n).map(|i| (PI * (i as f64 + 0.5) / n as f64).cos()).collect();
    let values: Vec<f64> = nodes.iter().map(|&t| target.eval(mid + half * t)).collect();
    let cheb: Vec<f64> = (0..n)
        .map(|k| {
            let s: f64 = (0..n)
                .map(|i| values[i] * (k as f64 * PI * (i as f64 + 0.5) / n as f64).cos())
                .sum();
            let c = 2.0 * s / n as f64;
            if k == 0 {
                c / 2.0
            } else {
                c
            }
        })
        .collect();

    // sum c_k T_k(t) as a polynomial in t.
    let mut in_t = vec![0.0; n];
    let mut t_prev = vec![1.0];
    let mut t_cur = vec![0.0, 1.0];
    for (k, &c) in cheb.iter().enumerate() {
        let tk: &Vec<f64> = match k {
            0 => &t_prev,
            1 => &t_cur,
            _ => {
                let mut next = vec![0.0; k + 1];
                for (i, &v) in t_cur.iter().enumerate() {
                    next[i + 1] += 2.0 * v;
                }
                for (i, &v) in t_prev.iter().enumerate() {
                    next[i] -= v;
                }
                t_prev = std::mem::replace(&mut t_cur, next);
                &t_cur
            }
        };
        for (i, &v) in tk.iter().enumerate() {
            in_t[i] += c * v;
        }
    }

    // Substitute t = (x - mid) / half with Horner's rule on polynomials.
    let a = 1.0 / half;
    let b = -mid / half;
    let mut coefficients = vec![0.0; n];
    for &c in in_t.iter().rev() {
        let mut next = vec![0.0; n];
        for (i, &v) in coefficients.iter().enumerate() {
            if v != 0.0 {
                next[i] += b * v;
                if i + 1 < n {
                    next[i + 1] += a * v;
                }
            }
        }
        next[0] += c;
        coefficients = next;
    }

    let mut p = PolyApprox {
        target,
        degree,
        interval: (lo, hi),
        basis: Basis::Monomial,
        coefficients,
        error_bound: 0.0,
        levels_consumed: levels_for_degree(degree),
    };
    p.error_bound = p.max_error(ERROR_GRID_POINTS);
    Ok(p)
}

pub fn eval_monomial(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

impl PolyApprox {
    pub fn eval(&self, x: f64) -> f64 {
        eval_monomial(&self.coefficients, x)
    }

    pub fn derivative_coefficients(&self) -> Vec<f64> {
        self.coefficients.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        eval_monomial(&self.derivative_coefficients(), x)
    }

    /// Encoding scale for inputs so that every intermediate of the encrypted
    /// evaluation keeps the full relative precision of `scale`: inputs near
    /// the interval edge then occupy about `scale` in the ciphertext.
    pub fn input_scale(&self, scale: f64) -> f64 {
        let (lo, hi) = self.interval;
        scale / lo.abs().max(hi.abs()).max(1.0)
    }

    /// Maximum deviation from the target over `points` evenly spaced samples.
    pub fn max_error(&self, points: usize) -> f64 {
        let (lo, hi) = self.interval;
        (0..points)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
                (self.eval(x) - self.target.eval(x)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Options for [`eval_poly_with`].
#[derive(Clone, Debug, Default)]
pub struct PolyEvalOptions<'a> {
    /// Slotwise multiplier folded into every coefficient, so masking costs no level.
    pub mask: Option<&'a [f64]>,
    /// Plaintext added to the result.
    pub offset: Option<&'a [f64]>,
    /// Scale of the result; defaults to the backend's scale.
    pub target_scale: Option<f64>,
}

/// Slotwise `p(x)` consuming exactly `levels_consumed` levels. Inputs
/// encrypted at [`PolyApprox::input_scale`] give the best precision.
pub fn eval_poly_encrypted(backend: &Backend, ct: &HeValue, p: &PolyApprox) -> Result<HeValue> {
    eval_poly_with(backend, ct, &p.coefficients, p.degree, &PolyEvalOptions::default())
}

/// Evaluates `sum_k c_k x^k` for a polynomial of nominal degree `degree`.
///
/// Powers `x^(2^j)` come from repeated squaring; each term multiplies its
/// coefficient into the lowest power it uses, then the remaining powers.
/// The coefficient's encoding scale is solved so every term lands on the
/// same level `level - ceil(log2(degree + 1))` and the same scale.
pub fn eval_poly_with(
    backend: &Backend,
    ct: &HeValue,
    coefficients: &[f64],
    degree: usize,
    opts: &PolyEvalOptions<'_>,
) -> Result<HeValue> {
    let slots = backend.slots();
    if coefficients.len() > degree + 1 {
        return Err(Error::InvalidParams("more coefficients than the degree allows".into()));
    }
    let depth = levels_for_degree(degree);
    let level = ct.level();
    if level < depth {
        return Err(Error::LevelExhausted { needed: depth, available: level });
    }
    let final_level = level - depth;
    let target = opts.target_scale.unwrap_or_else(|| backend.default_scale());
    let moduli = backend.params().moduli();

    let constant_vec = |c: f64| -> Vec<f64> {
        let mut v = vec![c; slots];
        if let Some(m) = opts.mask {
            for (d, &mk) in v.iter_mut().zip(m.iter().chain(std::iter::repeat(&0.0))) {
                *d *= mk;
            }
        }
        if let Some(o) = opts.offset {
            for (d, &ov) in v.iter_mut().zip(o.iter().chain(std::iter::repeat(&0.0))) {
                *d += ov;
            }
        }
        v
    };

    if depth == 0 {
        let zero = backend.sub(ct, ct)?;
        let c0 = coefficients.first().copied().unwrap_or(0.0);
        return backend.add_plain(&zero, &constant_vec(c0));
    }

    let mut powers = vec![ct.clone()];
    for _ in 1..depth {
        let last = powers.last().expect("nonempty");
        powers.push(backend.mul_ct(last, last)?);
    }

    let mut terms = Vec::new();
    for (k, &c) in coefficients.iter().enumerate().skip(1) {
        if c == 0.0 {
            continue;
        }
        let bits: Vec<usize> = (0..depth).filter(|&j| k >> j & 1 == 1).collect();
        let mut s = target;
        for &j in bits[1..].iter().rev() {
            s = s * moduli[level - j] as f64 / powers[j].scale();
        }
        let j0 = bits[0];
        let mut t = match opts.mask {
            Some(m) => {
                let v: Vec<f64> = m.iter().map(|&mk| c * mk).collect();
                backend.mul_plain(&powers[j0], &v, Some(s))?
            }
            None => backend.mul_scalar(&powers[j0], c, Some(s))?,
        };
        for &j in &bits[1..] {
            let lowered = backend.level_drop(&t, level - j)?;
            t = backend.mul_ct(&lowered, &powers[j])?;
        }
        let t = backend.level_drop(&t, final_level)?;
        terms.push(force_scale(t, target));
    }

    let mut acc = match terms.len() {
        0 => {
            let z = backend.mul_scalar(ct, 0.0, Some(target))?;
            backend.level_drop(&z, final_level)?
        }
        _ => {
            let mut it = terms.into_iter();
            let first = it.next().expect("nonempty");
            it.try_fold(first, |a, t| backend.add(&a, &t))?
        }
    };
    let c0 = coefficients.first().copied().unwrap_or(0.0);
    if opts.mask.is_some() || opts.offset.is_some() {
        acc = backend.add_plain(&acc, &constant_vec(c0))?;
    } else if c0 != 0.0 {
        acc = backend.add_scalar(&acc, c0)?;
    }
    Ok(acc)
}

/// Products of solved scales reproduce the target up to rounding in the last
/// bits; pin it so the terms can be added.
fn force_scale(mut v: HeValue, target: f64) -> HeValue {
    debug_assert!(((v.scale() - target) / target).abs() < 1e-9, "scale drift {} vs {target}", v.scale());
    v.relabel_scale(target);
    v
}
