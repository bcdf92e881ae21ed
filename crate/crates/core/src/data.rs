//! Datasets, standardization, train/test splits and synthetic generators.
//!
//! CSV files have a header row and one numeric column per feature; the last
//! column is the target. Binary targets may be written as `0/1` or `-1/+1`
//! and are stored as `-1/+1`.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{DataError, Error, Result};
use crate::rng::{self, Domain};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Regression,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `N x D` features.
    pub x: Tensor,
    pub y: Vec<f64>,
    pub task: Task,
    /// Feature names followed by the target name.
    pub columns: Vec<String>,
}

impl Dataset {
    pub fn new(x: Tensor, y: Vec<f64>, task: Task, columns: Vec<String>) -> Result<Self> {
        if x.rank() != 2 {
            return Err(Error::Shape(format!("features must be N x D, got {:?}", x.shape())));
        }
        if x.shape()[0] != y.len() {
            return Err(DataError::Length(x.shape()[0], y.len()).into());
        }
        if x.shape()[0] == 0 {
            return Err(DataError::Empty.into());
        }
        if task == Task::Binary {
            if let Some((row, &v)) = y.iter().enumerate().find(|(_, &v)| v != 1.0 && v != -1.0) {
                return Err(DataError::BadLabel { row, value: v.to_string() }.into());
            }
        }
        Ok(Self { x, y, task, columns })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.x.data()[i * d..(i + 1) * d]
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let d = self.dim();
        let x = idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Dataset {
            x: Tensor::from_shape([idx.len(), d], x),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            task: self.task,
            columns: self.columns.clone(),
        }
    }

    /// Features as a `B x D` tensor and targets as `B x 1` for rows `idx`.
    pub fn batch(&self, idx: &[usize]) -> (Tensor, Tensor) {
        let sub = self.subset(idx);
        let n = sub.len();
        (sub.x, Tensor::from_shape([n, 1], sub.y))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| DataError::Csv(e.to_string()))?;
        w.write_record(&self.columns).map_err(|e| DataError::Csv(e.to_string()))?;
        for i in 0..self.len() {
            let rec: Vec<String> = self.row(i).iter().chain([&self.y[i]]).map(|v| format!("{v:?}")).collect();
            w.write_record(&rec).map_err(|e| DataError::Csv(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a CSV dataset. Row numbers in errors count data rows from 1.
pub fn load_csv(path: impl AsRef<Path>, task: Task) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| DataError::Csv(e.to_string()))?;
    let columns: Vec<String> = reader.headers().map_err(|e| DataError::Csv(e.to_string()))?.iter().map(String::from).collect();
    if columns.len() < 2 {
        return Err(DataError::Csv("need at least one feature column and a target column".into()).into());
    }
    let width = columns.len();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
        if rec.len() != width {
            return Err(DataError::Ragged { row, expected: width, found: rec.len() }.into());
        }
        for (col, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| DataError::NonNumeric {
                row,
                col: col + 1,
                value: cell.to_string(),
            })?;
            if col + 1 < width {
                x.push(v);
            } else {
                y.push(match task {
                    Task::Regression => v,
                    Task::Binary if v == 1.0 => 1.0,
                    Task::Binary if v == 0.0 || v == -1.0 => -1.0,
                    Task::Binary => return Err(DataError::BadLabel { row, value: cell.to_string() }.into()),
                });
            }
        }
    }
    if y.is_empty() {
        return Err(DataError::Empty.into());
    }
    let n = y.len();
    Dataset::new(Tensor::from_shape([n, width - 1], x), y, task, columns)
}

/// Per-column affine map to zero mean and unit variance, fit on one set.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

fn mean_and_scale(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let sd = (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    // constant columns keep their scale
    (mean, if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
}

impl Standardizer {
    /// Fits on `data`. Binary targets are left untouched.
    pub fn fit(data: &Dataset) -> Self {
        let d = data.dim();
        let (x_mean, x_scale) = (0..d).map(|j| mean_and_scale((0..data.len()).map(move |i| data.row(i)[j]))).unzip();
        let (y_mean, y_scale) = match data.task {
            Task::Regression => mean_and_scale(data.y.iter().copied()),
            Task::Binary => (0.0, 1.0),
        };
        Self { x_mean, x_scale, y_mean, y_scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self { x_mean: vec![0.0; dim], x_scale: vec![1.0; dim], y_mean: 0.0, y_scale: 1.0 }
    }

    pub fn transform(&self, data: &Dataset) -> Dataset {
        let d = data.dim();
        let x = data.x.data().iter().enumerate().map(|(k, v)| (v - self.x_mean[k % d]) / self.x_scale[k % d]).collect();
        Dataset {
            x: Tensor::from_shape(data.x.shape().to_vec(), x),
            y: data.y.iter().map(|&v| self.transform_y(v)).collect(),
            task: data.task,
            columns: data.columns.clone(),
        }
    }

    pub fn inverse(&self, data: &Dataset) -> Dataset {
        let d = data.dim();
        let x = data.x.data().iter().enumerate().map(|(k, v)| v * self.x_scale[k % d] + self.x_mean[k % d]).collect();
        Dataset {
            x: Tensor::from_shape(data.x.shape().to_vec(), x),
            y: data.y.iter().map(|&v| self.inverse_y(v)).collect(),
            task: data.task,
            columns: data.columns.clone(),
        }
    }

    pub fn transform_y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    pub fn inverse_y(&self, y: f64) -> f64 {
        y * self.y_scale + self.y_mean
    }
}

/// One of the random train/test partitions of a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub index: u64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { index: 0, test_fraction: 0.1, seed: 0 }
    }
}

/// Train and test row indices, each sorted. A pure function of `(n, spec)`.
pub fn make_split(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 10 {
        return Err(Error::Contract(format!("splitting needs at least 10 rows, got {n}")));
    }
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Contract(format!("test fraction must lie in (0, 1), got {}", spec.test_fraction)));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(spec.seed, Domain::Split, &[spec.index]));
    let n_test = ((spec.test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut test = perm[..n_test].to_vec();
    let mut train = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// `y = sin(x) + noise_sd · ε` with `x ~ Uniform(-3, 3)`.
pub fn toy_sine(n: usize, noise_sd: f64, seed: u64) -> Dataset {
    let mut r = rng::stream(seed, Domain::Synthetic, &[1]);
    let x: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    let eps = rng::normals(&mut r, n);
    let y = x.iter().zip(&eps).map(|(x, e)| x.sin() + noise_sd * e).collect();
    Dataset { x: Tensor::from_shape([n, 1], x), y, task: Task::Regression, columns: vec!["x".into(), "y".into()] }
}

/// Two interleaved half circles with Gaussian jitter; labels alternate
/// between the upper (`+1`) and lower (`-1`) moon.
pub fn two_moons(n: usize, noise_sd: f64, seed: u64) -> Dataset {
    let mut r = rng::stream(seed, Domain::Synthetic, &[2]);
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let t = r.random_range(0.0..PI);
        let (px, py, label) = if i % 2 == 0 { (t.cos(), t.sin(), 1.0) } else { (1.0 - t.cos(), 0.5 - t.sin(), -1.0) };
        let e = rng::normals(&mut r, 2);
        x.push(px + noise_sd * e[0]);
        x.push(py + noise_sd * e[1]);
        y.push(label);
    }
    Dataset { x: Tensor::from_shape([n, 2], x), y, task: Task::Binary, columns: vec!["x1".into(), "x2".into(), "label".into()] }
}
