use rayon::prelude::*;
use serde::Serialize;

use super::{train, RunResult, TrainConfig};
use crate::data::{Dataset, SplitAssignment, Task};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Placements, Variant};

pub const ABLATION_HEADER: &str = "in,rep,out,metric,improvement_pct";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub input: bool,
    pub representation: bool,
    pub output: bool,
    /// `None` on aggregate rows.
    pub seed: Option<u64>,
    /// Test accuracy for classification, test RMSE for regression.
    pub metric: f64,
    /// Relative gain over the all-off row, positive when better.
    pub improvement_pct: f64,
    /// 1 is best; ties share the mean rank.
    pub rank: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub metric: String,
    pub seeds: Vec<u64>,
    /// Eight rows per seed, seed-major, placements in binary order.
    pub rows: Vec<AblationRow>,
    /// Mean metric over seeds per placement.
    pub mean: Vec<AblationRow>,
    #[serde(skip)]
    pub runs: Vec<RunResult>,
}

/// `(in, rep, out)` for the eight subsets, `in` as the most significant bit.
pub fn placement_grid() -> [(bool, bool, bool); 8] {
    std::array::from_fn(|b| (b & 4 != 0, b & 2 != 0, b & 1 != 0))
}

fn ablation_metric(task: Task) -> &'static str {
    match task {
        Task::BinaryClassification => "accuracy",
        Task::Regression => "rmse",
    }
}

fn improvement(task: Task, metric: f64, base: f64) -> f64 {
    if base == 0.0 {
        return 0.0;
    }
    let gain = match task {
        Task::BinaryClassification => metric - base,
        Task::Regression => base - metric,
    };
    100.0 * gain / base.abs()
}

fn ranks(task: Task, metrics: &[f64]) -> Vec<f64> {
    metrics
        .iter()
        .map(|&m| {
            let (better, tied) = metrics.iter().fold((0usize, 0usize), |(b, t), &o| {
                let is_better = match task {
                    Task::BinaryClassification => o > m,
                    Task::Regression => o < m,
                };
                (b + is_better as usize, t + (o == m) as usize)
            });
            better as f64 + (tied as f64 + 1.0) / 2.0
        })
        .collect()
}

fn rows_for(task: Task, seed: Option<u64>, metrics: &[f64]) -> Vec<AblationRow> {
    let base = metrics[0];
    let rank = ranks(task, metrics);
    placement_grid()
        .iter()
        .enumerate()
        .map(|(k, &(input, representation, output))| AblationRow {
            input,
            representation,
            output,
            seed,
            metric: metrics[k],
            improvement_pct: improvement(task, metrics[k], base),
            rank: rank[k],
        })
        .collect()
}

fn run_pool<T: Send>(threads: usize, jobs: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    Ok(pool.install(jobs))
}

/// Trains every subset of {input, representation, output} placements for
/// each seed. "Representation" modulates every hidden layer. The all-off
/// configuration is the static model under the same seed.
pub fn ablate_placements(
    base: &ModelSpec,
    ds: &Dataset,
    splits: &SplitAssignment,
    config: &TrainConfig,
    seeds: &[u64],
    threads: usize,
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::Input("ablation needs at least one seed".into()));
    }
    let task = base.task;
    let hidden_layers = base.backbone.hidden.len();
    let jobs: Vec<(u64, ModelSpec)> = seeds
        .iter()
        .flat_map(|&seed| {
            placement_grid().into_iter().map(move |(input, rep, output)| {
                let mut spec = base.clone();
                spec.variant = Variant::Modulated;
                spec.placements = Placements {
                    input,
                    representation: if rep { (0..hidden_layers).collect() } else { Vec::new() },
                    output,
                };
                (seed, spec)
            })
        })
        .collect();
    let runs: Vec<Result<RunResult>> = run_pool(threads, || {
        jobs.par_iter()
            .map(|(seed, spec)| {
                let cfg = TrainConfig {
                    seed: *seed,
                    ..config.clone()
                };
                train(spec.clone(), ds, splits, &cfg).map(|(_, r)| r)
            })
            .collect()
    })?;
    let runs: Vec<RunResult> = runs.into_iter().collect::<Result<_>>()?;

    let metric_of = |r: &RunResult| match task {
        Task::BinaryClassification => r.test_metrics.accuracy.expect("classification accuracy"),
        Task::Regression => r.test_metrics.rmse.expect("regression rmse"),
    };
    let mut rows = Vec::with_capacity(runs.len());
    let mut sums = [0.0; 8];
    for (s, chunk) in runs.chunks(8).enumerate() {
        let metrics: Vec<f64> = chunk.iter().map(metric_of).collect();
        for (acc, m) in sums.iter_mut().zip(&metrics) {
            *acc += m;
        }
        rows.extend(rows_for(task, Some(seeds[s]), &metrics));
    }
    let means: Vec<f64> = sums.iter().map(|s| s / seeds.len() as f64).collect();
    Ok(AblationReport {
        metric: ablation_metric(task).to_string(),
        seeds: seeds.to_vec(),
        rows,
        mean: rows_for(task, None, &means),
        runs,
    })
}

fn flag(b: bool) -> u8 {
    b as u8
}

/// Per-seed rows under [`ABLATION_HEADER`].
pub fn ablation_csv(report: &AblationReport) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            flag(r.input),
            flag(r.representation),
            flag(r.output),
            r.metric,
            r.improvement_pct
        ));
    }
    out
}

/// Seed-mean rows with their rank.
pub fn ablation_mean_csv(report: &AblationReport) -> String {
    let mut out = format!("{ABLATION_HEADER},rank\n");
    for r in &report.mean {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            flag(r.input),
            flag(r.representation),
            flag(r.output),
            r.metric,
            r.improvement_pct,
            r.rank
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub d_embedding: usize,
    pub metric: String,
    pub value: f64,
}

/// Embedding and modulated models for each embedding width. Modulated runs
/// use `base.placements`, or input-only when that is empty.
pub fn sweep_embedding_dim(
    base: &ModelSpec,
    ds: &Dataset,
    splits: &SplitAssignment,
    config: &TrainConfig,
    dims: &[usize],
    threads: usize,
) -> Result<Vec<SweepRow>> {
    if dims.is_empty() {
        return Err(Error::Input("sweep needs at least one embedding width".into()));
    }
    let jobs: Vec<ModelSpec> = [Variant::Embedding, Variant::Modulated]
        .into_iter()
        .flat_map(|variant| {
            dims.iter().map(move |&d| {
                let mut spec = base.clone();
                spec.variant = variant;
                spec.embedding.d_embedding = d;
                if spec.placements.is_empty() {
                    spec.placements = Placements::input_only();
                }
                spec
            })
        })
        .collect();
    let runs: Vec<Result<(ModelSpec, RunResult)>> = run_pool(threads, || {
        jobs.par_iter()
            .map(|spec| train(spec.clone(), ds, splits, config).map(|(_, r)| (spec.clone(), r)))
            .collect()
    })?;
    runs.into_iter()
        .map(|r| {
            let (spec, run) = r?;
            Ok(SweepRow {
                variant: spec.variant,
                d_embedding: spec.embedding.d_embedding,
                metric: run.metric.clone(),
                value: run.test_metrics.selection(spec.task).unwrap_or(f64::NAN),
            })
        })
        .collect()
}
