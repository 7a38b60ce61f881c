//! Static vs input-modulated MLPs on each synthetic shift, with decision
//! grids and feature histograms per time segment.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{train, RunResult, TrainConfig};
use crate::data::{generate, temporal_split, Dataset, ShiftKind, ShiftSpec, Task};
use crate::embedding::{EmbeddingConfig, DEFAULT_D_EMBEDDING};
use crate::error::{Error, Result};
use crate::model::{BackboneSpec, Model, ModelSpec, Placements, Variant};
use crate::modulation::DEFAULT_H_MOD;
use crate::numeric::{sigmoid, Matrix};

pub const GRID_SIZE: usize = 201;
pub const GRID_EXTENT: f64 = 4.0;
pub const HIST_BINS: usize = 48;
pub const HIST_EXTENT: f64 = 6.0;
/// Every `SVG_STRIDE`-th lattice point is drawn.
const SVG_STRIDE: usize = 4;

/// Defaults use the annual embedding and mini-batches of 128 capped at 400
/// epochs; the full-order embedding cannot extrapolate a rotation into the
/// held-out end of the year.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotConfig {
    pub kinds: Vec<ShiftKind>,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub ratios: [f64; 3],
    pub hidden: Vec<usize>,
    pub embedding: EmbeddingConfig,
    pub h_mod: usize,
    pub train: TrainConfig,
    /// Also write SVG renderings of each grid.
    pub svg: bool,
    pub threads: usize,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            kinds: ShiftKind::ALL.to_vec(),
            n: 10_000,
            seeds: vec![0],
            ratios: [0.7, 0.15, 0.15],
            hidden: vec![256, 256],
            embedding: EmbeddingConfig::annual(DEFAULT_D_EMBEDDING),
            h_mod: DEFAULT_H_MOD,
            train: TrainConfig {
                batch_size: 128,
                max_epochs: 400,
                ..TrainConfig::default()
            },
            svg: false,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PilotRun {
    pub seed: u64,
    pub variant: Variant,
    pub test_accuracy: f64,
    pub test_auc: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PilotKindReport {
    pub kind: ShiftKind,
    pub n: usize,
    pub segment_timestamps: Vec<f64>,
    pub runs: Vec<PilotRun>,
    pub mean_static_accuracy: f64,
    pub mean_modulated_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PilotReport {
    pub kinds: Vec<PilotKindReport>,
}

impl PilotReport {
    pub fn kind(&self, kind: ShiftKind) -> Option<&PilotKindReport> {
        self.kinds.iter().find(|k| k.kind == kind)
    }
}

fn spec_for(cfg: &PilotConfig, variant: Variant) -> ModelSpec {
    ModelSpec {
        backbone: BackboneSpec {
            input_width: 2,
            hidden: cfg.hidden.clone(),
        },
        variant,
        embedding: cfg.embedding.clone(),
        placements: Placements::input_only(),
        h_mod: cfg.h_mod,
        task: Task::BinaryClassification,
    }
}

fn lattice() -> Matrix {
    let span = 2.0 * GRID_EXTENT;
    let at = |i: usize| -GRID_EXTENT + span * i as f64 / (GRID_SIZE - 1) as f64;
    let mut data = Vec::with_capacity(2 * GRID_SIZE * GRID_SIZE);
    for i in 0..GRID_SIZE {
        for j in 0..GRID_SIZE {
            data.push(at(j));
            data.push(at(i));
        }
    }
    Matrix::from_raw(GRID_SIZE * GRID_SIZE, 2, data)
}

/// Class-1 probabilities over the lattice at timestamp `t`, `x1` outer.
pub fn decision_grid(model: &Model, t: f64) -> Result<Vec<f64>> {
    let pts = lattice();
    let z = model.preprocessing.standardizer.apply(&pts)?;
    Ok(model
        .forward_at(&z, t)?
        .as_slice()
        .iter()
        .map(|&v| sigmoid(v))
        .collect())
}

fn grid_csv(probs: &[f64]) -> String {
    let pts = lattice();
    let mut out = String::with_capacity(probs.len() * 40);
    out.push_str("x0,x1,p\n");
    for (i, p) in probs.iter().enumerate() {
        let r = pts.row(i);
        let _ = writeln!(out, "{},{},{}", r[0], r[1], p);
    }
    out
}

/// Heatmap of a lattice grid: blue for class 0, red for class 1.
pub fn render_grid_svg(probs: &[f64], title: &str) -> String {
    let cells = (GRID_SIZE - 1) / SVG_STRIDE + 1;
    let px = 4;
    let size = cells * px;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{}\" viewBox=\"0 0 {size} {}\">\n<title>{title}</title>\n",
        size + 16,
        size + 16
    );
    for ci in 0..cells {
        for cj in 0..cells {
            let p = probs[(ci * SVG_STRIDE) * GRID_SIZE + cj * SVG_STRIDE].clamp(0.0, 1.0);
            let red = (255.0 * p).round() as u8;
            let blue = 255 - red;
            // Row 0 is the lowest x1, drawn at the bottom.
            let y = (cells - 1 - ci) * px;
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{y}\" width=\"{px}\" height=\"{px}\" fill=\"rgb({red},64,{blue})\"/>",
                cj * px
            );
        }
    }
    let _ = writeln!(
        out,
        "<text x=\"2\" y=\"{}\" font-size=\"12\" font-family=\"monospace\">{title}</text>\n</svg>",
        size + 13
    );
    out
}

fn bin_of(v: f64) -> usize {
    let w = 2.0 * HIST_EXTENT / HIST_BINS as f64;
    (((v + HIST_EXTENT) / w).floor().max(0.0) as usize).min(HIST_BINS - 1)
}

fn histogram_csv(ds: &Dataset, spec: &ShiftSpec, model: &Model) -> Result<Vec<String>> {
    let z = model.preprocessing.standardizer.apply(&ds.x)?;
    let post = model
        .modulated_input(&z, &ds.t)?
        .ok_or_else(|| Error::Input("histograms need an input-modulated model".into()))?;
    let w = 2.0 * HIST_EXTENT / HIST_BINS as f64;
    let mut files = Vec::with_capacity(spec.segments);
    for seg in 0..spec.segments {
        let rows: Vec<usize> = (0..ds.len())
            .filter(|&i| spec.segment_of(ShiftSpec::relative_time(ds.t[i])) == seg)
            .collect();
        let mut out = String::from("segment,feature,stage,bin_lo,bin_hi,count\n");
        for (stage, m) in [("pre", &z), ("post", &post)] {
            for (j, name) in ds.feature_names.iter().enumerate() {
                let mut counts = [0usize; HIST_BINS];
                for &i in &rows {
                    counts[bin_of(m.get(i, j))] += 1;
                }
                for (b, c) in counts.iter().enumerate() {
                    let lo = -HIST_EXTENT + b as f64 * w;
                    let _ = writeln!(out, "{seg},{name},{stage},{lo},{},{c}", lo + w);
                }
            }
        }
        files.push(out);
    }
    Ok(files)
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_artifacts(
    dir: &Path,
    cfg: &PilotConfig,
    spec: &ShiftSpec,
    ds: &Dataset,
    stat: &Model,
    modu: &Model,
) -> Result<()> {
    let grids = dir.join("grids");
    let hist = dir.join("hist");
    mkdir(&grids)?;
    mkdir(&hist)?;
    let mids = spec.segment_midpoints();
    // The static model ignores time, so one grid serves every segment.
    let static_grid = decision_grid(stat, mids[0])?;
    let static_csv = grid_csv(&static_grid);
    for (k, &t) in mids.iter().enumerate() {
        let mod_grid = decision_grid(modu, t)?;
        write(&grids.join(format!("static_seg{k}.csv")), &static_csv)?;
        write(&grids.join(format!("modulated_seg{k}.csv")), &grid_csv(&mod_grid))?;
        if cfg.svg {
            let kind = spec.kind.short_name();
            write(
                &grids.join(format!("static_seg{k}.svg")),
                &render_grid_svg(&static_grid, &format!("{kind} static segment {k}")),
            )?;
            write(
                &grids.join(format!("modulated_seg{k}.svg")),
                &render_grid_svg(&mod_grid, &format!("{kind} modulated segment {k}")),
            )?;
        }
    }
    for (k, body) in histogram_csv(ds, spec, modu)?.iter().enumerate() {
        write(&hist.join(format!("seg{k}.csv")), body)?;
    }
    Ok(())
}

/// Runs the pilot. With `out_dir`, writes `<out_dir>/<kind>/` containing
/// `metrics.json`, `grids/` and `hist/`; grids and histograms come from the
/// first seed.
pub fn pilot(cfg: &PilotConfig, out_dir: Option<&Path>) -> Result<PilotReport> {
    if cfg.kinds.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Input("pilot needs at least one shift kind and one seed".into()));
    }
    let jobs: Vec<(ShiftKind, u64, Variant)> = cfg
        .kinds
        .iter()
        .flat_map(|&k| {
            cfg.seeds
                .iter()
                .flat_map(move |&s| [Variant::Static, Variant::Modulated].map(|v| (k, s, v)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.max(1))
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    let results: Vec<Result<(Model, RunResult)>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(kind, seed, variant)| {
                let spec = ShiftSpec::new(kind, cfg.n, seed);
                let ds = generate(&spec)?;
                let splits = temporal_split(&ds, cfg.ratios)?;
                let tc = TrainConfig {
                    seed,
                    ..cfg.train.clone()
                };
                train(spec_for(cfg, variant), &ds, &splits, &tc)
            })
            .collect()
    });
    let mut results = results.into_iter();

    let mut kinds = Vec::with_capacity(cfg.kinds.len());
    for &kind in &cfg.kinds {
        let mut runs = Vec::new();
        let mut first_models = None;
        for &seed in &cfg.seeds {
            let (stat, rs) = results.next().expect("static job")?;
            let (modu, rm) = results.next().expect("modulated job")?;
            for r in [&rs, &rm] {
                runs.push(PilotRun {
                    seed,
                    variant: r.variant,
                    test_accuracy: r.test_metrics.accuracy.expect("classification"),
                    test_auc: r.test_metrics.auc,
                    best_epoch: r.best_epoch,
                    epochs_run: r.epochs_run,
                });
            }
            if first_models.is_none() {
                first_models = Some((seed, stat, modu));
            }
        }
        let mean = |v: Variant| {
            let accs: Vec<f64> = runs
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| r.test_accuracy)
                .collect();
            accs.iter().sum::<f64>() / accs.len() as f64
        };
        let shift = ShiftSpec::new(kind, cfg.n, cfg.seeds[0]);
        let report = PilotKindReport {
            kind,
            n: cfg.n,
            segment_timestamps: shift.segment_midpoints(),
            mean_static_accuracy: mean(Variant::Static),
            mean_modulated_accuracy: mean(Variant::Modulated),
            runs,
        };
        if let Some(root) = out_dir {
            let dir = root.join(kind.short_name());
            mkdir(&dir)?;
            let (seed, stat, modu) = first_models.expect("at least one seed");
            let ds = generate(&ShiftSpec::new(kind, cfg.n, seed))?;
            write_artifacts(&dir, cfg, &shift, &ds, &stat, &modu)?;
            write(
                &dir.join("metrics.json"),
                &(serde_json::to_string_pretty(&report)? + "\n"),
            )?;
        }
        kinds.push(report);
    }
    Ok(PilotReport { kinds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_covers_the_square() {
        let pts = lattice();
        assert_eq!(pts.rows(), GRID_SIZE * GRID_SIZE);
        assert_eq!(pts.row(0), &[-4.0, -4.0]);
        assert_eq!(pts.row(GRID_SIZE * GRID_SIZE - 1), &[4.0, 4.0]);
        assert_eq!(pts.row(100 * GRID_SIZE + 100), &[0.0, 0.0]);
    }

    #[test]
    fn histogram_bins_clamp() {
        assert_eq!(bin_of(-100.0), 0);
        assert_eq!(bin_of(-6.0), 0);
        assert_eq!(bin_of(0.0), 24);
        assert_eq!(bin_of(5.99), 47);
        assert_eq!(bin_of(6.0), 47);
        assert_eq!(bin_of(1e9), 47);
    }

    #[test]
    fn svg_is_downsampled() {
        let probs = vec![0.25; GRID_SIZE * GRID_SIZE];
        let svg = render_grid_svg(&probs, "t");
        assert_eq!(svg.matches("<rect").count(), 51 * 51);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
