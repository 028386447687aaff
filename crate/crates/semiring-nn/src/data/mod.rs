//! Dataset ingestion and generation: CSV and IDX loaders, synthetic
//! circles/spheres, stratified splits and train-statistics standardization.

mod csv;
mod idx;
mod synth;

pub use csv::{load_csv, load_heart, load_iris, CsvSchema};
pub use idx::load_fashion_mnist;
pub use synth::{gen_circles, gen_spheres};

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    /// `[N × n]` feature matrix.
    pub features: Tensor<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Tensor<f64>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let ds = Self { name: name.into(), features, labels, n_classes };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.shape().len() != 2 || self.features.rows() != self.labels.len() {
            return Err(Error::Data(format!(
                "{}: features {:?} do not match {} labels",
                self.name,
                self.features.shape(),
                self.labels.len()
            )));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l >= self.n_classes) {
            return Err(Error::Data(format!(
                "{}: label {bad} outside 0..{}",
                self.name, self.n_classes
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "{}: non-finite feature value",
                self.name
            )));
        }
        Ok(())
    }

    /// Rows of `other` appended to `self` (same width and class count).
    pub fn merge(&self, other: &Dataset) -> Result<Dataset> {
        if self.n_features() != other.n_features() || self.n_classes != other.n_classes {
            return Err(Error::Data(format!(
                "cannot merge {} with {}",
                self.name, other.name
            )));
        }
        let mut data = self.features.data().to_vec();
        data.extend_from_slice(other.features.data());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Dataset::new(
            self.name.clone(),
            Tensor::new(vec![labels.len(), self.n_features()], data)?,
            labels,
            self.n_classes,
        )
    }

    fn subset(&self, indices: &[usize], suffix: &str) -> Dataset {
        let n = self.n_features();
        let mut data = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            name: format!("{}-{suffix}", self.name),
            features: Tensor::new(vec![indices.len(), n], data).expect("sized"),
            labels,
            n_classes: self.n_classes,
        }
    }

    /// Write the rows as CSV (`f0,...,f{n-1},label`) for auditing.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let n = self.n_features();
        let header: Vec<String> = (0..n).map(|j| format!("f{j}")).collect();
        writeln!(out, "{},label", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self.features.row(i).iter().map(f64::to_string).collect();
            writeln!(out, "{},{}", row.join(","), self.labels[i])?;
        }
        Ok(())
    }
}

/// Default location of the bundled datasets: the workspace `data/`
/// directory, found from either the workspace root or a crate directory.
pub fn default_data_dir() -> std::path::PathBuf {
    for candidate in ["data", "../../data", "../data"] {
        let p = std::path::PathBuf::from(candidate);
        if p.is_dir() {
            return p;
        }
    }
    std::path::PathBuf::from("data")
}

/// Deterministic stratified split: per class, a seeded shuffle sends
/// `round(test_fraction · count)` rows to the test set.
pub fn train_test_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Data(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..ds.n_classes {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        members.shuffle(&mut rng);
        let n_test = (members.len() as f64 * test_fraction).round() as usize;
        test_idx.extend_from_slice(&members[..n_test]);
        train_idx.extend_from_slice(&members[n_test..]);
    }
    Ok((ds.subset(&train_idx, "train"), ds.subset(&test_idx, "test")))
}

/// Per-feature transform statistics computed on the training set.
#[derive(Debug, Clone)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// `1/sd`, or 0 for (near-)constant features, which are zeroed.
    pub scale: Vec<f64>,
}

/// Zero-mean unit-variance per feature, with statistics from the training
/// set only; constant features map to zero rather than NaN.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, StandardizeStats)> {
    let n = train.n_features();
    if test.n_features() != n {
        return Err(Error::Data(format!(
            "feature width mismatch: train {} vs test {}",
            n,
            test.n_features()
        )));
    }
    let rows = train.len() as f64;
    let mut mean = vec![0.0; n];
    for i in 0..train.len() {
        for (m, v) in mean.iter_mut().zip(train.features.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows);
    let mut var = vec![0.0; n];
    for i in 0..train.len() {
        for j in 0..n {
            let d = train.features.row(i)[j] - mean[j];
            var[j] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= rows);
    let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let scale: Vec<f64> = sd.iter().map(|&s| if s > 1e-12 { 1.0 / s } else { 0.0 }).collect();

    let apply = |ds: &Dataset| -> Result<Dataset> {
        let mut data = Vec::with_capacity(ds.len() * n);
        for i in 0..ds.len() {
            for j in 0..n {
                data.push((ds.features.row(i)[j] - mean[j]) * scale[j]);
            }
        }
        Dataset::new(
            ds.name.clone(),
            Tensor::new(vec![ds.len(), n], data)?,
            ds.labels.clone(),
            ds.n_classes,
        )
    };
    let train_out = apply(train)?;
    let test_out = apply(test)?;
    Ok((train_out, test_out, StandardizeStats { mean, sd, scale }))
}
