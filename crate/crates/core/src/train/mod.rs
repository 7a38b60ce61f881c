//! Training with early stopping, evaluation, and the experiment harnesses.

mod ablation;
mod metrics;
mod pilot;

pub use ablation::{
    ablate_placements, ablation_csv, ablation_mean_csv, sweep_embedding_dim, AblationReport, AblationRow, SweepRow,
    ABLATION_HEADER,
};
pub use metrics::{accuracy, auc, rmse};
pub use pilot::{
    decision_grid, pilot, render_grid_svg, PilotConfig, PilotKindReport, PilotReport, PilotRun, GRID_EXTENT, GRID_SIZE,
    HIST_BINS, HIST_EXTENT,
};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitAssignment, Standardizer, TargetScaler, Task};
use crate::embedding::TrendNormalizer;
use crate::error::{Error, Result};
use crate::model::{Batch, Model, ModelSpec, Preprocessing, Variant};
use crate::numeric::{adamw_step, sigmoid, AdamWConfig, AdamWState, Matrix};
use crate::rng;

/// Strict improvement margin for early stopping.
pub const IMPROVEMENT_TOL: f64 = 1e-12;

/// Rows per forward pass when evaluating a whole split.
const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adamw: AdamWConfig,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1024,
            max_epochs: 1000,
            patience: 16,
            adamw: AdamWConfig::default(),
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        if self.patience == 0 {
            return Err("patience must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return Err("max_epochs must be at least 1".into());
        }
        self.adamw.validate()
    }
}

/// Model-selection metric for a task: AUC (higher is better) or RMSE.
pub fn selection_metric(task: Task) -> &'static str {
    match task {
        Task::BinaryClassification => "auc",
        Task::Regression => "rmse",
    }
}

fn higher_is_better(task: Task) -> bool {
    task == Task::BinaryClassification
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Improved,
    Waiting,
    Stop,
}

/// Patience counter over a validation metric.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    higher_is_better: bool,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, higher_is_better: bool) -> Self {
        Self {
            patience,
            higher_is_better,
            best: None,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> Progress {
        let improved = match self.best {
            None => true,
            Some(b) if self.higher_is_better => metric > b + IMPROVEMENT_TOL,
            Some(b) => metric < b - IMPROVEMENT_TOL,
        };
        if improved {
            self.best = Some(metric);
            self.best_epoch = epoch;
            self.stale = 0;
            return Progress::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            Progress::Stop
        } else {
            Progress::Waiting
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
}

impl TestMetrics {
    /// The selection metric's value on this split.
    pub fn selection(&self, task: Task) -> Option<f64> {
        match task {
            Task::BinaryClassification => self.auc,
            Task::Regression => self.rmse,
        }
    }
}

/// Everything about a run except the parameters. Serialized output leaves
/// out the wall-clock time so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: Variant,
    pub seed: u64,
    pub metric: String,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_metric: f64,
    pub epochs_run: usize,
    /// Mean training loss before the first update.
    pub initial_train_loss: f64,
    pub history: Vec<EpochRecord>,
    pub test_metrics: TestMetrics,
    pub num_params: usize,
    pub model: ModelSpec,
    pub train: TrainConfig,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

/// A split in model space.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub x: Matrix,
    pub raw_time: Option<Matrix>,
    /// Loss-space targets (standardized for regression).
    pub y: Vec<f64>,
    /// Targets in original units.
    pub y_original: Vec<f64>,
}

impl PreparedSplit {
    pub fn new(model: &Model, ds: &Dataset, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Input("empty split".into()));
        }
        let sub = ds.subset(rows);
        let scaler = model.preprocessing.target;
        let y = match model.task() {
            Task::BinaryClassification => sub.y.clone(),
            Task::Regression => sub.y.iter().map(|&v| scaler.scale(v)).collect(),
        };
        Ok(Self {
            x: model.preprocessing.standardizer.apply(&sub.x)?,
            raw_time: model.time_features(&sub.t),
            y,
            y_original: sub.y,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn batch(&self, rows: &[usize]) -> Batch {
        Batch {
            x: self.x.select_rows(rows),
            raw_time: self.raw_time.as_ref().map(|r| r.select_rows(rows)),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Standardizer and target scaler from the training rows; the trend range
/// from training timestamps.
pub fn fit_preprocessing(ds: &Dataset, train_rows: &[usize], uses_time: bool) -> Result<Preprocessing> {
    if train_rows.is_empty() {
        return Err(Error::Input("empty training split".into()));
    }
    let t: Vec<f64> = train_rows.iter().map(|&i| ds.t[i]).collect();
    let trend = match TrendNormalizer::fit(&t) {
        Ok(n) => n,
        Err(e) if uses_time => return Err(e),
        Err(_) => TrendNormalizer { t_min: 0.0, t_max: 1.0 },
    };
    let target = match ds.task {
        Task::BinaryClassification => TargetScaler::default(),
        Task::Regression => TargetScaler::fit(&train_rows.iter().map(|&i| ds.y[i]).collect::<Vec<_>>()),
    };
    Ok(Preprocessing {
        standardizer: Standardizer::fit(&ds.x, train_rows)?,
        trend,
        target,
    })
}

/// Raw model outputs over a whole split.
pub fn predict_split(model: &Model, split: &PreparedSplit) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(split.len());
    let rows: Vec<usize> = (0..split.len()).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let b = if chunk.len() == split.len() {
            Batch {
                x: split.x.clone(),
                raw_time: split.raw_time.clone(),
                y: Vec::new(),
            }
        } else {
            split.batch(chunk)
        };
        out.extend_from_slice(model.forward(&b.x, b.raw_time.as_ref())?.as_slice());
    }
    Ok(out)
}

pub fn evaluate(model: &Model, split: &PreparedSplit) -> Result<TestMetrics> {
    let out = predict_split(model, split)?;
    let loss = model.loss(&Matrix::column_vector(&out)?, &split.y)?.0;
    Ok(match model.task() {
        Task::BinaryClassification => {
            let probs: Vec<f64> = out.iter().map(|&z| sigmoid(z)).collect();
            TestMetrics {
                loss,
                auc: auc(&out, &split.y).ok(),
                accuracy: Some(accuracy(&probs, &split.y)?),
                rmse: None,
            }
        }
        Task::Regression => {
            let scaler = model.preprocessing.target;
            let pred: Vec<f64> = out.iter().map(|&z| scaler.unscale(z)).collect();
            TestMetrics {
                loss,
                auc: None,
                accuracy: None,
                rmse: Some(rmse(&pred, &split.y_original)?),
            }
        }
    })
}

fn validation_metric(model: &Model, split: &PreparedSplit) -> Result<f64> {
    let out = predict_split(model, split)?;
    match model.task() {
        Task::BinaryClassification => auc(&out, &split.y),
        Task::Regression => {
            let scaler = model.preprocessing.target;
            let pred: Vec<f64> = out.iter().map(|&z| scaler.unscale(z)).collect();
            rmse(&pred, &split.y_original)
        }
    }
}

/// Trains a fresh model initialized from `config.seed` and returns it with
/// the parameters of the best validation epoch restored.
pub fn train(
    spec: ModelSpec,
    ds: &Dataset,
    splits: &SplitAssignment,
    config: &TrainConfig,
) -> Result<(Model, RunResult)> {
    let started = Instant::now();
    config.validate().map_err(Error::Input)?;
    splits.validate(ds.len())?;
    if spec.backbone.input_width != ds.width() {
        return Err(Error::dim(
            "train",
            format!("{} features", spec.backbone.input_width),
            ds.width(),
        ));
    }
    if spec.task != ds.task {
        return Err(Error::Input(format!(
            "model task {:?} does not match dataset task {:?}",
            spec.task, ds.task
        )));
    }
    let preprocessing = fit_preprocessing(ds, &splits.train, spec.uses_time())?;
    let mut model = Model::new(spec, preprocessing, config.seed)?;
    let train_split = PreparedSplit::new(&model, ds, &splits.train)?;
    let val_split = PreparedSplit::new(&model, ds, &splits.val)?;
    let test_split = PreparedSplit::new(&model, ds, &splits.test)?;

    let initial_train_loss = evaluate(&model, &train_split)?.loss;
    let mut states: Vec<AdamWState> = model.params_mut().into_iter().map(|p| AdamWState::new(p)).collect();
    let mut stopper = EarlyStopping::new(config.patience, higher_is_better(model.task()));
    let mut shuffle_rng = rng::stream(config.seed, "shuffle");
    let mut order: Vec<usize> = (0..train_split.len()).collect();
    let mut best_params = model.flat_params();
    let mut history = Vec::new();

    for epoch in 1..=config.max_epochs {
        if config.shuffle {
            rng::shuffle(&mut order, &mut shuffle_rng);
        }
        let mut loss_sum = 0.0;
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let batch = train_split.batch(rows);
            model.zero_grad();
            let loss = model.loss_and_grad(&batch)?;
            if !loss.is_finite() || model.flat_grads().iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += loss * rows.len() as f64;
            for (p, s) in model.params_mut().into_iter().zip(&mut states) {
                adamw_step(p, s, &config.adamw);
            }
        }
        let val_metric = validation_metric(&model, &val_split)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_split.len() as f64,
            val_metric,
        });
        match stopper.observe(epoch, val_metric) {
            Progress::Improved => best_params = model.flat_params(),
            Progress::Waiting => {}
            Progress::Stop => break,
        }
    }
    model.set_flat_params(&best_params)?;
    let test_metrics = evaluate(&model, &test_split)?;
    let result = RunResult {
        variant: model.variant(),
        seed: config.seed,
        metric: selection_metric(model.task()).to_string(),
        best_epoch: stopper.best_epoch(),
        best_val_metric: stopper.best().expect("at least one epoch"),
        epochs_run: history.len(),
        initial_train_loss,
        history,
        test_metrics,
        num_params: model.num_params(),
        model: model.spec().clone(),
        train: config.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, result))
}
