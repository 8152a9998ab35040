//! Dataset loading: IDX images, CSV tables and synthetic Gaussian blobs.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Features in `[0, 1]` with one-hot labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Matrix,
    pub classes: Vec<usize>,
    pub class_names: Vec<String>,
    /// Rows dropped while loading because of missing values.
    pub dropped: usize,
    pub provenance: String,
}

impl Dataset {
    pub fn new(features: Matrix, classes: Vec<usize>, class_count: usize, provenance: impl Into<String>) -> Result<Self> {
        if features.rows() != classes.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} labels",
                features.rows(),
                classes.len()
            )));
        }
        if let Some(&c) = classes.iter().find(|&&c| c >= class_count) {
            return Err(Error::Dimension(format!("label {c} with {class_count} classes")));
        }
        if features.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite feature".into()));
        }
        let labels = one_hot(&classes, class_count);
        Ok(Dataset {
            features,
            labels,
            classes,
            class_names: (0..class_count).map(|c| c.to_string()).collect(),
            dropped: 0,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_count(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.labels.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: self.labels.select_rows(idx),
            classes: idx.iter().map(|&i| self.classes[i]).collect(),
            class_names: self.class_names.clone(),
            dropped: self.dropped,
            provenance: self.provenance.clone(),
        }
    }

    /// Rows in a seeded random order.
    pub fn shuffled(&self, seed: u64) -> Dataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        self.select(&idx)
    }

    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Seeded train/test split with `test_fraction` of the rows held out.
    pub fn split(&self, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let test = ((self.len() as f64) * test_fraction.clamp(0.0, 1.0)).round() as usize;
        let (te, tr) = idx.split_at(test);
        (self.select(tr), self.select(te))
    }

    /// Consecutive batches; the last one may be short.
    pub fn batches(&self, batch_size: usize) -> impl Iterator<Item = (Matrix, Matrix, &[usize])> + '_ {
        let b = batch_size.max(1);
        (0..self.len()).step_by(b).map(move |start| {
            let len = b.min(self.len() - start);
            (
                self.features.slice_rows(start, len),
                self.labels.slice_rows(start, len),
                &self.classes[start..start + len],
            )
        })
    }
}

pub fn one_hot(classes: &[usize], width: usize) -> Matrix {
    Matrix::from_fn(classes.len(), width, |i, j| if classes[i] == j { 1.0 } else { 0.0 })
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Parse { offset, reason: "truncated header".into() })
}

/// Parses an IDX image file into `count x (rows*cols)` pixels scaled by 1/255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Matrix> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Parse { offset: 0, reason: format!("image magic {magic:#010x}") });
    }
    let count = be_u32(bytes, 4)? as usize;
    let width = be_u32(bytes, 8)? as usize * be_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    let needed = count.checked_mul(width).ok_or_else(|| Error::Parse { offset: 4, reason: "size overflow".into() })?;
    if body.len() < needed {
        return Err(Error::Parse {
            offset: 16 + body.len(),
            reason: format!("expected {needed} pixel bytes, file ends after {}", body.len()),
        });
    }
    if body.len() > needed {
        return Err(Error::Parse { offset: 16 + needed, reason: "trailing bytes".into() });
    }
    Matrix::from_vec(count, width, body.iter().map(|&p| f64::from(p) / 255.0).collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Parse { offset: 0, reason: format!("label magic {magic:#010x}") });
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Parse {
            offset: 8 + body.len().min(count),
            reason: format!("expected {count} labels, found {}", body.len()),
        });
    }
    if let Some(pos) = body.iter().position(|&l| l > 9) {
        return Err(Error::Parse { offset: 8 + pos, reason: format!("label {}", body[pos]) });
    }
    Ok(body.iter().map(|&l| usize::from(l)).collect())
}

/// Loads an IDX image/label pair, gzipped or not, as a 10-class dataset.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let x = parse_idx_images(&read_maybe_gz(images)?)?;
    let y = parse_idx_labels(&read_maybe_gz(labels)?)?;
    if x.rows() != y.len() {
        return Err(Error::Dimension(format!("{} images but {} labels", x.rows(), y.len())));
    }
    Dataset::new(x, y, 10, format!("idx:{}", images.display()))
}

/// How to read a CSV table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: String,
    /// Columns ignored entirely, such as row numbers and ids.
    #[serde(default)]
    pub drop_columns: Vec<String>,
    /// Non-numeric feature columns, mapped to the sorted order of their values.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Cell values treated as missing; rows containing one are dropped.
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
}

fn default_missing() -> Vec<String> {
    vec!["".into(), "NA".into(), "?".into()]
}

impl CsvSchema {
    /// Layout of the breast-cancer biopsy table shipped in `data/bcw.csv`.
    pub fn bcw() -> Self {
        CsvSchema {
            label_column: "class".into(),
            drop_columns: vec!["".into(), "ID".into()],
            categorical: Vec::new(),
            missing: default_missing(),
        }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let text = read_maybe_gz(path)?;
    let mut ds = parse_csv(&text, schema)?;
    ds.provenance = format!("csv:{}", path.display());
    Ok(ds)
}

/// Parses CSV bytes; features are min-max normalized per column and a
/// constant column maps to 0. Labels are numbered in sorted order.
pub fn parse_csv(bytes: &[u8], schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Malformed("CSV has no header".into()));
    }
    let label_idx = headers
        .iter()
        .position(|h| *h == schema.label_column)
        .ok_or_else(|| Error::Malformed(format!("no label column {:?}", schema.label_column)))?;
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_idx && !schema.drop_columns.contains(&headers[i]))
        .collect();
    let categorical: Vec<bool> = feature_idx.iter().map(|&i| schema.categorical.contains(&headers[i])).collect();

    let mut raw_rows: Vec<(Vec<String>, String)> = Vec::new();
    let mut dropped = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cells: Vec<&str> = record.iter().map(str::trim).collect();
        let relevant = feature_idx.iter().chain(std::iter::once(&label_idx));
        if relevant.clone().any(|&i| cells.get(i).is_none_or(|c| schema.missing.iter().any(|m| m == c))) {
            dropped += 1;
            continue;
        }
        let feats: Vec<String> = feature_idx.iter().map(|&i| cells[i].to_owned()).collect();
        for (k, f) in feats.iter().enumerate() {
            if !categorical[k] && f.parse::<f64>().is_err() {
                return Err(Error::Malformed(format!(
                    "record {}: non-numeric value {f:?} in column {:?}",
                    line + 1,
                    headers[feature_idx[k]]
                )));
            }
        }
        raw_rows.push((feats, cells[label_idx].to_owned()));
    }
    if raw_rows.is_empty() {
        return Err(Error::Malformed("CSV contains no usable rows".into()));
    }

    let mut levels: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); feature_idx.len()];
    for (k, lv) in levels.iter_mut().enumerate() {
        if categorical[k] {
            for (feats, _) in &raw_rows {
                lv.insert(feats[k].clone(), 0);
            }
            for (code, v) in lv.values_mut().enumerate() {
                *v = code;
            }
        }
    }
    let mut label_map: BTreeMap<String, usize> = raw_rows.iter().map(|(_, l)| (l.clone(), 0)).collect();
    for (code, v) in label_map.values_mut().enumerate() {
        *v = code;
    }

    let width = feature_idx.len();
    let mut features = Matrix::from_fn(raw_rows.len(), width, |i, k| {
        let cell = &raw_rows[i].0[k];
        if categorical[k] {
            levels[k][cell] as f64
        } else {
            cell.parse().expect("validated")
        }
    });
    min_max_normalize(&mut features);
    let classes: Vec<usize> = raw_rows.iter().map(|(_, l)| label_map[l]).collect();
    let mut ds = Dataset::new(features, classes, label_map.len(), "csv")?;
    ds.class_names = label_map.into_keys().collect();
    ds.dropped = dropped;
    Ok(ds)
}

/// Scales each column to `[0, 1]`; constant columns become 0.
pub fn min_max_normalize(m: &mut Matrix) {
    let (rows, cols) = m.shape();
    for j in 0..cols {
        let (lo, hi) = (0..rows).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let v = m.get(i, j);
            (lo.min(v), hi.max(v))
        });
        for i in 0..rows {
            let v = if hi > lo { (m.get(i, j) - lo) / (hi - lo) } else { 0.0 };
            m.set(i, j, v);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub samples: usize,
    pub features: usize,
    pub classes: usize,
    /// Minimum distance between class means in units of the blob deviation.
    #[serde(default = "default_separation")]
    pub separation: f64,
}

fn default_separation() -> f64 {
    6.0
}

/// Gaussian class blobs with unit deviation, min-max normalized afterwards.
/// Sample `i` belongs to class `i mod classes` before a seeded shuffle.
pub fn synth(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    let SynthConfig { samples, features, classes, separation } = *cfg;
    if classes == 0 || features == 0 {
        return Err(Error::InvalidParams("synthetic data needs features and classes".into()));
    }
    if classes > samples {
        return Err(Error::InvalidParams(format!("{classes} classes for {samples} samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..features).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut min_dist = f64::INFINITY;
    for a in 0..classes {
        for b in a + 1..classes {
            let d: f64 = means[a].iter().zip(&means[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            min_dist = min_dist.min(d);
        }
    }
    if min_dist.is_finite() && min_dist > 0.0 {
        let k = separation / min_dist;
        means.iter_mut().flatten().for_each(|v| *v *= k);
    }
    let mut labels: Vec<usize> = (0..samples).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let mut x = Matrix::zeros(samples, features);
    for (i, &c) in labels.iter().enumerate() {
        for j in 0..features {
            let noise: f64 = StandardNormal.sample(&mut rng);
            x.set(i, j, means[c][j] + noise);
        }
    }
    min_max_normalize(&mut x);
    Dataset::new(x, labels, classes, format!("synth:{samples}x{features}x{classes}@{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{accuracy, forward, init_layers, train_step, Activation, Loss};
    use proptest::prelude::*;

    fn idx_images(count: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGES_MAGIC, count, 2, 2] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    #[test]
    fn idx_parsing() {
        let bytes = idx_images(2, &[0, 0, 0, 0, 255, 51, 0, 255]);
        let m = parse_idx_images(&bytes).unwrap();
        assert_eq!(m.shape(), (2, 4));
        assert!(m.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(m.row(1), &[1.0, 0.2, 0.0, 1.0]);

        match parse_idx_images(&bytes[..20]) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("{other:?}"),
        }
        let mut wrong = bytes.clone();
        wrong[3] = 1;
        assert!(matches!(parse_idx_images(&wrong), Err(Error::Parse { offset: 0, .. })));

        let mut labels = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        labels.extend_from_slice(&3u32.to_be_bytes());
        labels.extend_from_slice(&[7, 0, 9]);
        assert_eq!(parse_idx_labels(&labels).unwrap(), vec![7, 0, 9]);
        assert!(parse_idx_labels(&labels[..10]).is_err());
    }

    #[test]
    fn idx_files_and_gzip() {
        use flate2::{write::GzEncoder, Compression};
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.gz");
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&idx_images(1, &[10, 20, 30, 40])).unwrap();
        std::fs::write(&img, enc.finish().unwrap()).unwrap();
        let lab = dir.path().join("lab");
        let mut l = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        l.extend_from_slice(&1u32.to_be_bytes());
        l.push(4);
        std::fs::write(&lab, l).unwrap();
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.labels.row(0), &[0., 0., 0., 0., 1., 0., 0., 0., 0., 0.]);
        assert!((ds.features.get(0, 3) - 40.0 / 255.0).abs() < 1e-15);
    }

    const TABLE: &str = "\"\",\"ID\",\"a\",\"b\",\"c\",\"class\"\n\
        \"1\",\"7\",1,5,2,\"yes\"\n\
        \"2\",\"8\",3,5,NA,\"no\"\n\
        \"3\",\"9\",5,5,4,\"no\"\n";

    #[test]
    fn csv_parsing() {
        let schema = CsvSchema { label_column: "class".into(), ..CsvSchema::bcw() };
        let ds = parse_csv(TABLE.as_bytes(), &schema).unwrap();
        assert_eq!(ds.dropped, 1);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.features.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(ds.features.row(1), &[1.0, 0.0, 1.0]);
        assert_eq!(ds.class_names, vec!["no", "yes"]);
        assert_eq!(ds.classes, vec![1, 0]);

        assert!(parse_csv(b"", &schema).is_err());
        assert!(parse_csv(b"a,class\n", &schema).is_err());
        let bad = "a,b,class\n1,x,p\n";
        assert!(matches!(parse_csv(bad.as_bytes(), &schema), Err(Error::Malformed(_))));
        let cat = CsvSchema { categorical: vec!["b".into()], ..schema };
        let ds = parse_csv("a,b,class\n1,x,p\n2,w,q\n".as_bytes(), &cat).unwrap();
        assert_eq!(ds.features.column(1), vec![1.0, 0.0]);
    }

    #[test]
    fn bundled_bcw() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/bcw.csv");
        let ds = load_csv(&path, &CsvSchema::bcw()).unwrap();
        assert_eq!(ds.feature_count(), 9);
        assert_eq!(ds.class_count(), 2);
        assert_eq!(ds.len() + ds.dropped, 699);
        assert_eq!(ds.dropped, 16);
        assert_eq!(ds.class_names, vec!["benign", "malignant"]);
    }

    #[test]
    fn bundled_mnist_subset() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
        let ds = load_idx(&dir.join("mnist5k-images-idx3-ubyte.gz"), &dir.join("mnist5k-labels-idx1-ubyte.gz"))
            .unwrap();
        assert_eq!(ds.features.shape(), (5000, 784));
        assert!((0..10).all(|c| ds.classes.contains(&c)));
    }

    #[test]
    fn synth_is_deterministic_and_sized() {
        let cfg = SynthConfig { samples: 100, features: 8192, classes: 2, separation: 6.0 };
        assert_eq!(synth(&cfg, 7).unwrap(), synth(&cfg, 7).unwrap());
        assert_ne!(synth(&cfg, 7).unwrap().features, synth(&cfg, 8).unwrap().features);
        let big = synth(&SynthConfig { samples: 100, features: 16384, classes: 10, separation: 6.0 }, 1).unwrap();
        assert_eq!(big.features.shape(), (100, 16384));
        assert_eq!(big.labels.shape(), (100, 10));
        let too_many = SynthConfig { samples: 3, features: 2, classes: 4, separation: 6.0 };
        assert!(synth(&too_many, 0).is_err());
    }

    #[test]
    fn separated_blobs_are_learnable() {
        let ds = synth(&SynthConfig { samples: 400, features: 6, classes: 2, separation: 6.0 }, 3).unwrap();
        let mut layers = init_layers(&[6, 2], &[Activation::Sigmoid], 0).unwrap();
        for _ in 0..300 {
            train_step(&mut layers, &ds.features, &ds.labels, Loss::Mse, 2.0).unwrap();
        }
        let out = forward(&layers, &ds.features).unwrap();
        let acc = accuracy(out.output(), &ds.classes);
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn batches_and_splits() {
        let ds = synth(&SynthConfig { samples: 10, features: 3, classes: 2, separation: 6.0 }, 0).unwrap();
        let sizes: Vec<usize> = ds.batches(4).map(|(x, _, _)| x.rows()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let (tr, te) = ds.split(0.3, 1);
        assert_eq!((tr.len(), te.len()), (7, 3));
        assert_eq!(ds.shuffled(5), ds.shuffled(5));
    }

    proptest! {
        #[test]
        fn normalization_bounds(v in proptest::collection::vec(-1e6f64..1e6, 12)) {
            let mut m = Matrix::from_vec(4, 3, v).unwrap();
            min_max_normalize(&mut m);
            prop_assert!(m.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn one_hot_rows_sum_to_one(classes in proptest::collection::vec(0usize..5, 1..20)) {
            let m = one_hot(&classes, 5);
            for i in 0..m.rows() {
                prop_assert_eq!(m.row(i).iter().sum::<f64>(), 1.0);
            }
        }
    }
}
