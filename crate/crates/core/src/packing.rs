//! Slot layouts for weight matrices and the packed linear-algebra kernels.
//!
//! Column lengths are padded to `padded_len(l)`, the smallest power of two
//! strictly greater than `l` (so 3 -> 4 and 4 -> 8). Layout widths may be
//! smaller than the ciphertext slot count; unused slots stay zero.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, HeValue};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Smallest power of two strictly greater than `l`.
pub fn padded_len(l: usize) -> usize {
    (l + 1).next_power_of_two()
}

/// Block-size rule for the one-level batch layout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Smallest power of two strictly greater than the column length.
    #[default]
    Strict,
    /// Smallest power of two not below the column length.
    Tight,
}

impl Padding {
    pub fn pad(self, l: usize) -> usize {
        match self {
            Padding::Strict => padded_len(l),
            Padding::Tight => l.max(1).next_power_of_two(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackingScheme {
    OneLevelBatch,
    OneLevelScalar,
    RotsumMatrix,
}

/// Shape of a packed matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackMeta {
    pub scheme: PackingScheme,
    pub rows: usize,
    pub cols: usize,
    /// Padded column length.
    pub padded_col_len: usize,
    pub cols_per_ct: usize,
    /// `width / padded_col_len`, or 1 when columns are split across ciphertexts.
    pub division_step: usize,
    /// Ciphertexts per column; greater than one only for split columns.
    pub segments: usize,
    /// Number of slots the layout spans.
    pub width: usize,
}

impl PackMeta {
    pub fn ct_count(&self) -> usize {
        if self.segments > 1 {
            self.cols * self.segments
        } else {
            self.cols.div_ceil(self.cols_per_ct)
        }
    }

    /// True when split column segments must be summed after rotate-and-add.
    pub fn cross_segment(&self) -> bool {
        self.segments > 1
    }
}

/// Plaintext slot vectors of a packed matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub meta: PackMeta,
    pub vectors: Vec<Vec<f64>>,
}

/// Encrypted packed matrix.
#[derive(Clone, Debug)]
pub struct PackedWeights {
    pub meta: PackMeta,
    pub ciphertexts: Vec<HeValue>,
}

fn check_width(width: usize, backend: Option<&Backend>) -> Result<()> {
    if !width.is_power_of_two() {
        return Err(Error::Dimension(format!("layout width {width} is not a power of two")));
    }
    if let Some(b) = backend {
        if width > b.slots() {
            return Err(Error::Dimension(format!(
                "layout width {width} exceeds {} slots",
                b.slots()
            )));
        }
    }
    Ok(())
}

fn check_finite(w: &Matrix) -> Result<()> {
    if w.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Columns padded and concatenated, `width / padded_col_len` per vector.
pub fn layout_batch(w: &Matrix, width: usize) -> Result<Layout> {
    layout_batch_padded(w, width, Padding::Strict)
}

pub fn layout_batch_padded(w: &Matrix, width: usize, padding: Padding) -> Result<Layout> {
    check_width(width, None)?;
    check_finite(w)?;
    let p = padding.pad(w.rows());
    if p > width {
        return Err(Error::Dimension(format!(
            "padded column length {p} exceeds {width} slots; use the rotate-and-sum layout"
        )));
    }
    let cpc = width / p;
    let meta = PackMeta {
        scheme: PackingScheme::OneLevelBatch,
        rows: w.rows(),
        cols: w.cols(),
        padded_col_len: p,
        cols_per_ct: cpc,
        division_step: cpc,
        segments: 1,
        width,
    };
    let vectors = (0..meta.ct_count())
        .map(|k| {
            let mut v = vec![0.0; width];
            for b in 0..cpc {
                let j = k * cpc + b;
                if j < w.cols() {
                    for i in 0..w.rows() {
                        v[b * p + i] = w.get(i, j);
                    }
                }
            }
            v
        })
        .collect();
    Ok(Layout { meta, vectors })
}

/// One column per vector.
pub fn layout_scalar(w: &Matrix, width: usize) -> Result<Layout> {
    check_width(width, None)?;
    check_finite(w)?;
    let p = padded_len(w.rows());
    if p > width {
        return Err(Error::Dimension(format!(
            "padded column length {p} exceeds {width} slots; use the rotate-and-sum layout"
        )));
    }
    let meta = PackMeta {
        scheme: PackingScheme::OneLevelScalar,
        rows: w.rows(),
        cols: w.cols(),
        padded_col_len: p,
        cols_per_ct: 1,
        division_step: width / p,
        segments: 1,
        width,
    };
    let vectors = (0..w.cols())
        .map(|j| {
            let mut v = vec![0.0; width];
            for i in 0..w.rows() {
                v[i] = w.get(i, j);
            }
            v
        })
        .collect();
    Ok(Layout { meta, vectors })
}

/// Padded columns concatenated; a column longer than `width` is split into
/// `padded_col_len / width` consecutive segments.
pub fn pack_columns_rotsum(b: &Matrix, width: usize) -> Result<Layout> {
    check_width(width, None)?;
    check_finite(b)?;
    let p = padded_len(b.rows());
    if p > width {
        let segments = p / width;
        let meta = PackMeta {
            scheme: PackingScheme::RotsumMatrix,
            rows: b.rows(),
            cols: b.cols(),
            padded_col_len: p,
            cols_per_ct: 1,
            division_step: 1,
            segments,
            width,
        };
        let mut vectors = Vec::with_capacity(meta.ct_count());
        for j in 0..b.cols() {
            for s in 0..segments {
                let mut v = vec![0.0; width];
                for (t, slot) in v.iter_mut().enumerate() {
                    let i = s * width + t;
                    if i < b.rows() {
                        *slot = b.get(i, j);
                    }
                }
                vectors.push(v);
            }
        }
        return Ok(Layout { meta, vectors });
    }
    let mut layout = layout_batch(b, width)?;
    layout.meta.scheme = PackingScheme::RotsumMatrix;
    Ok(layout)
}

pub fn encrypt_layout<R: Rng + ?Sized>(
    layout: &Layout,
    backend: &Backend,
    rng: &mut R,
) -> Result<PackedWeights> {
    check_width(layout.meta.width, Some(backend))?;
    let ciphertexts = layout
        .vectors
        .iter()
        .map(|v| backend.encrypt(v, None, rng))
        .collect::<Result<_>>()?;
    Ok(PackedWeights { meta: layout.meta.clone(), ciphertexts })
}

pub fn pack_matrix_batch<R: Rng + ?Sized>(
    w: &Matrix,
    backend: &Backend,
    width: Option<usize>,
    rng: &mut R,
) -> Result<PackedWeights> {
    encrypt_layout(&layout_batch(w, width.unwrap_or(backend.slots()))?, backend, rng)
}

pub fn pack_matrix_scalar<R: Rng + ?Sized>(
    w: &Matrix,
    backend: &Backend,
    width: Option<usize>,
    rng: &mut R,
) -> Result<PackedWeights> {
    encrypt_layout(&layout_scalar(w, width.unwrap_or(backend.slots()))?, backend, rng)
}

/// Sums a list of ciphertexts at equal level and scale.
pub fn sum_all(backend: &Backend, items: Vec<HeValue>) -> Result<HeValue> {
    let mut it = items.into_iter();
    let first = it.next().ok_or_else(|| Error::Dimension("empty sum".into()))?;
    it.try_fold(first, |acc, x| backend.add(&acc, &x))
}

/// `times` rounds of `ct += rotate(ct, first_step * 2^t)`. Afterwards slot
/// `i` holds the sum of slots `i .. i + first_step * 2^times` in steps of
/// `first_step`. Returns the result and the number of rotations.
pub fn rotate_and_sum(
    backend: &Backend,
    ct: &HeValue,
    first_step: usize,
    times: usize,
) -> Result<(HeValue, usize)> {
    let mut acc = ct.clone();
    let mut count = 0;
    let mut step = first_step;
    for _ in 0..times {
        let (r, n) = backend.rotate(&acc, step)?;
        count += n;
        acc = backend.add(&acc, &r)?;
        step *= 2;
    }
    Ok((acc, count))
}

fn require_level(cts: &[HeValue]) -> Result<()> {
    if let Some(c) = cts.iter().find(|c| c.level() == 0) {
        return Err(Error::LevelExhausted { needed: 1, available: c.level() });
    }
    Ok(())
}

/// Encrypted `W x` with one multiplicative level. The batch scheme returns
/// one ciphertext whose `cols_per_ct` blocks must be summed by the client
/// (see [`client_fold`]); the scalar scheme returns `W x` in the leading slots.
pub fn matvec_one_level(pw: &PackedWeights, x: &[f64], backend: &Backend) -> Result<Vec<HeValue>> {
    let m = &pw.meta;
    if x.len() != m.cols {
        return Err(Error::Dimension(format!("vector of length {} against {} columns", x.len(), m.cols)));
    }
    require_level(&pw.ciphertexts)?;
    let products: Vec<HeValue> = match m.scheme {
        PackingScheme::OneLevelBatch => pw
            .ciphertexts
            .par_iter()
            .enumerate()
            .map(|(k, ct)| {
                let mut v = vec![0.0; m.width];
                for b in 0..m.cols_per_ct {
                    let j = k * m.cols_per_ct + b;
                    if j < m.cols {
                        v[b * m.padded_col_len..(b + 1) * m.padded_col_len].fill(x[j]);
                    }
                }
                backend.mul_plain(ct, &v, None)
            })
            .collect::<Result<_>>()?,
        PackingScheme::OneLevelScalar => pw
            .ciphertexts
            .par_iter()
            .zip(x.par_iter())
            .map(|(ct, &xj)| backend.mul_scalar(ct, xj, None))
            .collect::<Result<_>>()?,
        PackingScheme::RotsumMatrix => {
            return Err(Error::Dimension("matvec_one_level needs a one-level scheme".into()))
        }
    };
    Ok(vec![sum_all(backend, products)?])
}

/// Sums the `cols_per_ct` blocks of a decrypted batch result and keeps `rows` entries.
pub fn client_fold(
    decrypted: &[f64],
    cols_per_ct: usize,
    padded_col_len: usize,
    rows: usize,
) -> Result<Vec<f64>> {
    if decrypted.len() != cols_per_ct * padded_col_len || rows > padded_col_len {
        return Err(Error::Dimension(format!(
            "cannot fold {} values into {cols_per_ct} blocks of {padded_col_len}",
            decrypted.len()
        )));
    }
    let mut out = vec![0.0; rows];
    for block in decrypted.chunks_exact(padded_col_len) {
        for (o, v) in out.iter_mut().zip(block) {
            *o += v;
        }
    }
    Ok(out)
}

/// A position in a product result that holds one dot product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mark {
    pub ct: usize,
    pub slot: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug)]
pub struct MarkedResult {
    pub ciphertexts: Vec<HeValue>,
    pub marks: Vec<Mark>,
    pub rows: usize,
    pub cols: usize,
    /// Key-switched rotations performed.
    pub rotations: usize,
}

impl MarkedResult {
    pub fn mark_positions(&self) -> Vec<(usize, usize)> {
        self.marks.iter().map(|m| (m.ct, m.slot)).collect()
    }

    /// Gathers the marked slots of already decrypted ciphertexts.
    pub fn extract_from(&self, decrypted: &[Vec<f64>]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for m in &self.marks {
            out.set(m.row, m.col, decrypted[m.ct][m.slot]);
        }
        out
    }

    pub fn extract(&self, backend: &Backend) -> Result<Matrix> {
        let dec = self
            .ciphertexts
            .iter()
            .map(|c| backend.decrypt(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.extract_from(&dec))
    }
}

/// Left operand of [`matmat_rotsum`].
pub enum RowOperand<'a> {
    /// Plaintext rows, replicated into the layout on the fly.
    Plain(&'a Matrix),
    /// Ciphertexts already holding [`replicate_row`] layouts, one per row.
    Encrypted { rows: &'a [HeValue], cols: usize },
}

/// Row entries padded to `padded_len` and repeated to fill `width` slots.
/// For split columns, `segment` selects which `width`-slice of the padded row.
pub fn replicate_row(row: &[f64], padded_len: usize, width: usize, segment: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    if padded_len > width {
        for (t, slot) in v.iter_mut().enumerate() {
            if let Some(&x) = row.get(segment * width + t) {
                *slot = x;
            }
        }
    } else {
        for block in v.chunks_exact_mut(padded_len) {
            block[..row.len()].copy_from_slice(row);
        }
    }
    v
}

/// `A * B` with `B` in the rotate-and-sum layout: per row of `A` and per
/// ciphertext of `B`, one slotwise product followed by
/// `log2(min(padded_col_len, width))` rotate-and-add rounds. Marked slots
/// sit at multiples of `padded_col_len`.
pub fn matmat_rotsum(a: RowOperand<'_>, b: &PackedWeights, backend: &Backend) -> Result<MarkedResult> {
    let m = &b.meta;
    if m.scheme != PackingScheme::RotsumMatrix {
        return Err(Error::Dimension("right operand is not in the rotate-and-sum layout".into()));
    }
    let (n_rows, inner) = match &a {
        RowOperand::Plain(x) => (x.rows(), x.cols()),
        RowOperand::Encrypted { rows, cols } => (rows.len(), *cols),
    };
    if inner != m.rows {
        return Err(Error::Dimension(format!("inner dimensions {inner} and {} differ", m.rows)));
    }
    if matches!(a, RowOperand::Encrypted { .. }) && m.segments > 1 {
        return Err(Error::Dimension("encrypted rows do not support split columns".into()));
    }
    require_level(&b.ciphertexts)?;
    rotsum_core(m, n_rows, b.ciphertexts.len(), backend, |i, c| {
        let bct = &b.ciphertexts[c];
        match &a {
            RowOperand::Plain(x) => {
                let v = replicate_row(x.row(i), m.padded_col_len, m.width, c % m.segments);
                backend.mul_plain(bct, &v, None)
            }
            RowOperand::Encrypted { rows, .. } => {
                let (x, y) = align(backend, &rows[i], bct)?;
                backend.mul_ct(&x, &y)
            }
        }
    })
}

/// [`matmat_rotsum`] with encrypted replicated rows on the left and a
/// plaintext rotate-and-sum layout on the right.
pub fn matmat_rotsum_plain_right(
    rows: &[HeValue],
    inner: usize,
    b: &Layout,
    backend: &Backend,
) -> Result<MarkedResult> {
    let m = &b.meta;
    if m.scheme != PackingScheme::RotsumMatrix || m.segments > 1 {
        return Err(Error::Dimension("right operand must be an unsplit rotate-and-sum layout".into()));
    }
    if inner != m.rows {
        return Err(Error::Dimension(format!("inner dimensions {inner} and {} differ", m.rows)));
    }
    require_level(rows)?;
    rotsum_core(m, rows.len(), b.vectors.len(), backend, |i, c| {
        backend.mul_plain(&rows[i], &b.vectors[c], None)
    })
}

fn rotsum_core(
    m: &PackMeta,
    n_rows: usize,
    n_ct: usize,
    backend: &Backend,
    product: impl Fn(usize, usize) -> Result<HeValue> + Sync,
) -> Result<MarkedResult> {
    let span = m.padded_col_len.min(m.width);
    let rounds = span.trailing_zeros() as usize;
    let jobs: Vec<(usize, usize)> =
        (0..n_rows).flat_map(|i| (0..n_ct).map(move |c| (i, c))).collect();
    let summed: Vec<(HeValue, usize)> = jobs
        .par_iter()
        .map(|&(i, c)| rotate_and_sum(backend, &product(i, c)?, 1, rounds))
        .collect::<Result<_>>()?;
    let rotations = summed.iter().map(|(_, n)| n).sum();

    let mut ciphertexts = Vec::new();
    let mut marks = Vec::new();
    let mut it = summed.into_iter().map(|(ct, _)| ct);
    for i in 0..n_rows {
        if m.segments > 1 {
            for j in 0..m.cols {
                let segs: Vec<HeValue> = it.by_ref().take(m.segments).collect();
                marks.push(Mark { ct: ciphertexts.len(), slot: 0, row: i, col: j });
                ciphertexts.push(sum_all(backend, segs)?);
            }
        } else {
            for c in 0..n_ct {
                let ct = it.next().expect("one result per job");
                for blk in 0..m.cols_per_ct {
                    let j = c * m.cols_per_ct + blk;
                    if j < m.cols {
                        marks.push(Mark {
                            ct: ciphertexts.len(),
                            slot: blk * m.padded_col_len,
                            row: i,
                            col: j,
                        });
                    }
                }
                ciphertexts.push(ct);
            }
        }
    }
    Ok(MarkedResult { ciphertexts, marks, rows: n_rows, cols: m.cols, rotations })
}

/// Drops the higher-level operand so both sit at the same level.
pub fn align(backend: &Backend, a: &HeValue, b: &HeValue) -> Result<(HeValue, HeValue)> {
    let l = a.level().min(b.level());
    Ok((backend.level_drop(a, l)?, backend.level_drop(b, l)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackingChoice {
    Batch,
    Scalar,
}

pub const DEFAULT_SCALAR_THRESHOLD: f64 = 2.7;

/// Scalar packing when `slots / second_layer_size` is strictly below the
/// threshold, batch packing otherwise.
pub fn choose_packing(second_layer_size: usize, slots: usize, threshold: f64) -> PackingChoice {
    assert!(second_layer_size >= 1, "layer size must be positive");
    if (slots as f64) / (second_layer_size as f64) < threshold {
        PackingChoice::Scalar
    } else {
        PackingChoice::Batch
    }
}

/// Rotation count per sample and pass for a list of layer sizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationCount {
    /// `sum_i (pad(l_i) * pad(l_{i+1}) / slots) * log2(pad(l_{i+1}))`, evaluated as written.
    pub exact: f64,
    /// Same with the ciphertext count rounded up to whole ciphertexts.
    pub ceil: u64,
}

pub fn count_rotations(layer_sizes: &[usize], slots: usize) -> RotationCount {
    let mut exact = 0.0;
    let mut ceil = 0u64;
    for pair in layer_sizes.windows(2) {
        let a = padded_len(pair[0]);
        let b = padded_len(pair[1]);
        let log = b.trailing_zeros() as u64;
        exact += (a as f64) * (b as f64) / (slots as f64) * log as f64;
        ceil += ((a * b).div_ceil(slots)) as u64 * log;
    }
    RotationCount { exact, ceil }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::NoiseModel;
    use crate::ckks::{power_of_two_steps, CryptoParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sim() -> Backend {
        let p = CryptoParams::set2();
        let steps = power_of_two_steps(p.slot_count());
        Backend::noise_sim(p, NoiseModel::exact(), &steps)
    }

    fn m(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Matrix {
        Matrix::from_fn(rows, cols, f)
    }

    #[test]
    fn padding_is_strict() {
        assert_eq!(padded_len(3), 4);
        assert_eq!(padded_len(4), 8);
        assert_eq!(padded_len(784), 1024);
        assert_eq!(padded_len(128), 256);
        assert_eq!(padded_len(1), 2);
    }

    #[test]
    fn batch_layout_of_four_by_four_in_eight_slots() {
        let w = m(4, 4, |i, j| (10 * (i + 1) + j + 1) as f64);
        let l = layout_batch_padded(&w, 8, Padding::Tight).unwrap();
        assert_eq!(l.vectors.len(), 2);
        assert_eq!(l.meta.cols_per_ct, 2);
        assert_eq!(l.vectors[0], vec![11.0, 21.0, 31.0, 41.0, 12.0, 22.0, 32.0, 42.0]);
        assert_eq!(l.vectors[1], vec![13.0, 23.0, 33.0, 43.0, 14.0, 24.0, 34.0, 44.0]);
        let strict = layout_batch(&w, 8).unwrap();
        assert_eq!((strict.vectors.len(), strict.meta.padded_col_len), (4, 8));
    }

    #[test]
    fn large_batch_layout_counts() {
        let w = Matrix::zeros(128, 784);
        let l = layout_batch(&w, 4096).unwrap();
        assert_eq!(l.meta.padded_col_len, 256);
        assert_eq!(l.meta.cols_per_ct, 16);
        assert_eq!(l.vectors.len(), 49);
        assert_eq!(layout_scalar(&w, 4096).unwrap().vectors.len(), 784);
        assert!(layout_batch(&Matrix::zeros(4096, 1), 4096).is_err());
    }

    #[test]
    fn rotsum_layout_matches_toy_arrangement() {
        let b = m(3, 5, |i, j| (10 * i + j) as f64 + 0.5);
        let l = pack_columns_rotsum(&b, 8).unwrap();
        assert_eq!(l.vectors.len(), 3);
        let e = |i: usize, j: usize| b.get(i, j);
        assert_eq!(l.vectors[0], vec![e(0, 0), e(1, 0), e(2, 0), 0.0, e(0, 1), e(1, 1), e(2, 1), 0.0]);
        assert_eq!(l.vectors[1], vec![e(0, 2), e(1, 2), e(2, 2), 0.0, e(0, 3), e(1, 3), e(2, 3), 0.0]);
        assert_eq!(l.vectors[2], vec![e(0, 4), e(1, 4), e(2, 4), 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(l.meta.division_step, 2);
    }

    #[test]
    fn long_columns_split_across_segments() {
        let b = Matrix::zeros(8192, 1);
        let l = pack_columns_rotsum(&b, 4096).unwrap();
        assert_eq!(l.meta.padded_col_len, 16384);
        assert_eq!(l.meta.segments, 4);
        assert!(l.meta.cross_segment());
        let b = Matrix::zeros(4096, 2);
        let l = pack_columns_rotsum(&b, 4096).unwrap();
        assert_eq!((l.meta.segments, l.vectors.len()), (2, 4));
    }

    #[test]
    fn toy_product_marks_slots_zero_and_four() {
        let backend = sim();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = m(3, 3, |i, j| (i * 3 + j) as f64 * 0.1 + 0.2);
        let b = m(3, 5, |i, j| (i + 2 * j) as f64 * 0.05 - 0.3);
        let pw = encrypt_layout(&pack_columns_rotsum(&b, 8).unwrap(), &backend, &mut rng).unwrap();
        let r = matmat_rotsum(RowOperand::Plain(&a), &pw, &backend).unwrap();
        assert_eq!(r.rotations, 3 * 3 * 2);
        let first = backend.decrypt(&r.ciphertexts[0]).unwrap();
        let want = a.matmul(&b).unwrap();
        assert!((first[0] - want.get(0, 0)).abs() < 1e-12);
        assert!((first[4] - want.get(0, 1)).abs() < 1e-12);
        assert_eq!(r.marks.len(), 15);
        assert!(r.extract(&backend).unwrap().max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn matvec_both_schemes_and_fold() {
        let backend = sim();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = m(4, 4, |i, j| (i as f64 - j as f64) * 0.25);
        let x = [1.0, 2.0, 3.0, 4.0];
        let want = w.matvec(&x).unwrap();
        let pw = pack_matrix_batch(&w, &backend, Some(16), &mut rng).unwrap();
        assert_eq!(pw.meta.cols_per_ct, 2);
        let out = matvec_one_level(&pw, &x, &backend).unwrap();
        assert_eq!(out[0].level(), backend.max_level() - 1);
        let dec = backend.decrypt(&out[0]).unwrap();
        let got = client_fold(&dec[..16], 2, 8, 4).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        let ps = pack_matrix_scalar(&w, &backend, Some(16), &mut rng).unwrap();
        let dec = backend.decrypt(&matvec_one_level(&ps, &x, &backend).unwrap()[0]).unwrap();
        for (g, w) in dec.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!(client_fold(&[0.0; 5], 2, 4, 4).is_err());
    }

    #[test]
    fn split_column_product_sums_segments() {
        let backend = sim();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = m(40, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 * 0.01);
        let a = m(2, 40, |i, j| ((i + j) % 5) as f64 * 0.1);
        let pw = encrypt_layout(&pack_columns_rotsum(&b, 16).unwrap(), &backend, &mut rng).unwrap();
        assert_eq!(pw.meta.segments, 4);
        let r = matmat_rotsum(RowOperand::Plain(&a), &pw, &backend).unwrap();
        assert!(r.extract(&backend).unwrap().max_abs_diff(&a.matmul(&b).unwrap()) < 1e-12);
    }

    #[test]
    fn chooser_threshold() {
        assert_eq!(choose_packing(128, 4096, 2.7), PackingChoice::Batch);
        assert_eq!(choose_packing(4096, 4096, 2.7), PackingChoice::Scalar);
        assert_eq!(choose_packing(1517, 4096, 2.7), PackingChoice::Batch);
        assert_eq!(choose_packing(1518, 4096, 2.7), PackingChoice::Scalar);
    }

    #[test]
    fn rotation_formula() {
        assert_eq!(count_rotations(&[784, 128], 4096).exact, 512.0);
        assert_eq!(count_rotations(&[784], 4096).exact, 0.0);
        let small = count_rotations(&[3, 3], 4096);
        assert_eq!(small.exact, 4.0 * 4.0 / 4096.0 * 2.0);
        assert_eq!(small.ceil, 2);
    }
}
