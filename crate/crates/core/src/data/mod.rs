//! Tabular datasets with timestamps: containers, splits, standardization,
//! CSV ingestion, synthetic shift generators and per-window statistics.

mod csv_io;
mod stats;
mod synth;

pub use csv_io::{load_csv, load_csv_with_vocab, write_csv, CategoricalVocab, CsvOptions};
pub use stats::{temporal_stats, write_stats_csv, FeatureMoments, WindowStat};
pub use synth::{generate, ShiftKind, ShiftSpec, SYNTH_EPOCH, SYNTH_SPAN};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    BinaryClassification,
    Regression,
}

impl Task {
    /// Binary when every label is 0 or 1.
    pub fn infer(labels: &[f64]) -> Self {
        if labels.iter().all(|&y| y == 0.0 || y == 1.0) {
            Task::BinaryClassification
        } else {
            Task::Regression
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Epoch seconds.
    pub t: Vec<f64>,
    pub feature_names: Vec<String>,
    pub task: Task,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, t: Vec<f64>, feature_names: Vec<String>, task: Task) -> Result<Self> {
        let n = x.rows();
        if y.len() != n || t.len() != n {
            return Err(Error::dim(
                "Dataset::new",
                format!("{n} labels and timestamps"),
                format!("{} labels, {} timestamps", y.len(), t.len()),
            ));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::dim("Dataset::new", x.cols(), feature_names.len()));
        }
        if let Some(i) = t.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("timestamp in row {i} is not finite")));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("label in row {i} is not finite")));
        }
        if task == Task::BinaryClassification {
            if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Input(format!("label {} in row {i} is not binary", y[i])));
            }
        }
        Ok(Self {
            x,
            y,
            t,
            feature_names,
            task,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn width(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            t: indices.iter().map(|&i| self.t[i]).collect(),
            feature_names: self.feature_names.clone(),
            task: self.task,
        }
    }

    /// Row indices in chronological order, ties broken by original index.
    pub fn chronological_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.t[a].total_cmp(&self.t[b]).then(a.cmp(&b)));
        idx
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitAssignment {
    /// Checks the three sets are disjoint and cover `0..n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n || seen[i] {
                return Err(Error::Input(format!("split index {i} out of range or repeated")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Input("split does not cover every row".into()));
        }
        if self.train.is_empty() || self.val.is_empty() || self.test.is_empty() {
            return Err(Error::Input("every split must be nonempty".into()));
        }
        Ok(())
    }
}

/// Sizes for a three-way split: `floor(r_train·n)` and `floor(r_val·n)`
/// rows, the remainder to test.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<(usize, usize, usize)> {
    if n < 3 {
        return Err(Error::Input(format!("need at least 3 rows to split, got {n}")));
    }
    if ratios.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::Input(format!("split ratios must be positive, got {ratios:?}")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("split ratios must sum to 1, got {sum}")));
    }
    // The nudge keeps exact products like 0.7·10 from flooring to 6.
    let cut = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let train = cut(ratios[0]);
    let val = cut(ratios[1]);
    if train == 0 || val == 0 || train + val >= n {
        return Err(Error::Input(format!(
            "ratios {ratios:?} leave an empty split for {n} rows"
        )));
    }
    Ok((train, val, n - train - val))
}

fn cut_ordered(order: Vec<usize>, sizes: (usize, usize, usize)) -> SplitAssignment {
    let (a, b, _) = sizes;
    let mut train = order[..a].to_vec();
    let mut val = order[a..a + b].to_vec();
    let mut test = order[a + b..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    SplitAssignment { train, val, test }
}

/// Earliest rows to train, next to validation, latest to test.
pub fn temporal_split(ds: &Dataset, ratios: [f64; 3]) -> Result<SplitAssignment> {
    let sizes = split_sizes(ds.len(), ratios)?;
    Ok(cut_ordered(ds.chronological_order(), sizes))
}

/// Seeded shuffle, then the same cut rule as [`temporal_split`].
pub fn random_split(ds: &Dataset, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    let sizes = split_sizes(ds.len(), ratios)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    rng::shuffle(&mut order, &mut rng::stream(seed, "split"));
    Ok(cut_ordered(order, sizes))
}

/// Per-feature z-scoring with population statistics from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Input("cannot fit a standardizer on zero rows".into()));
        }
        let n = rows.len() as f64;
        let m = x.cols();
        let mut mean = vec![0.0; m];
        for &i in rows {
            for (acc, v) in mean.iter_mut().zip(x.row(i)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n);
        let mut var = vec![0.0; m];
        for &i in rows {
            for ((acc, v), mu) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.width() {
            return Err(Error::dim("Standardizer::apply", self.width(), x.cols()));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, mu), sd) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                let div = if *sd > 0.0 { *sd } else { 1.0 };
                *v = (*v - mu) / div;
            }
        }
        Ok(out)
    }
}

/// Affine scaling of regression targets; identity for classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl Default for TargetScaler {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl TargetScaler {
    pub fn fit(y: &[f64]) -> Self {
        if y.is_empty() {
            return Self::default();
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Self {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        }
    }

    pub fn scale(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn unscale(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}
