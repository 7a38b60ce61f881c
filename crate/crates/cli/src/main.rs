//! `tempmod` command-line front end.
//!
//! Exit codes: 0 on success, 1 on runtime or I/O errors, 2 on usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;
use tempmod::config::RunConfigFile;
use tempmod::data::{
    generate, load_csv, temporal_stats, write_csv, write_stats_csv, CsvOptions, ShiftKind, ShiftSpec, Task,
};
use tempmod::model::save_model;
use tempmod::train::{
    ablate_placements, ablation_csv, ablation_mean_csv, pilot, sweep_embedding_dim, train, PilotConfig, RunResult,
};
use tempmod::{Error, Result};

/// Learning rates tried by `train --lr-grid`.
const LR_GRID: [f64; 3] = [3e-4, 1e-3, 3e-3];

#[derive(Parser)]
#[command(
    name = "tempmod",
    version,
    about = "Temporal modulation experiments for tabular data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic shift dataset as CSV (x0,x1,y,t).
    Generate(GenerateArgs),
    /// Train one model from a JSON config.
    Train(TrainArgs),
    /// Train all 8 placement subsets for each seed.
    Ablate(AblateArgs),
    /// Embedding and modulated models across embedding widths.
    Sweep(SweepArgs),
    /// Static vs input-modulated models on every shift kind.
    Pilot(PilotArgs),
    /// Per-window feature moments of a CSV dataset.
    Stats(StatsArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_parser = parse_kind, help = "concept-shift, covariate-shift, label-shift or no-shift")]
    kind: ShiftKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    segments: usize,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Try lr in {3e-4, 1e-3, 3e-3} and keep the best on validation.
    #[arg(long)]
    lr_grid: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Per-seed CSV; the seed mean goes next to it as `<stem>_mean.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "8,32,128")]
    dims: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PilotArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    kinds: Vec<ShiftKind>,
    /// Also render each grid as SVG.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 12)]
    windows: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "y")]
    label_col: String,
    #[arg(long, default_value = "t")]
    time_col: String,
}

fn parse_kind(s: &str) -> Result<ShiftKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let text = e.render().to_string();
            eprint!("{text}");
            if !text.contains("Usage:") {
                let mut cmd = Cli::command().bin_name("tempmod");
                let sub = std::env::args()
                    .nth(1)
                    .and_then(|n| cmd.find_subcommand_mut(&n).cloned());
                let usage = match sub {
                    Some(sub) => {
                        let name = format!("tempmod {}", sub.get_name());
                        sub.bin_name(name).render_usage()
                    }
                    None => cmd.render_usage(),
                };
                eprintln!("\n{usage}");
            }
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Pilot(a) => cmd_pilot(a),
        Command::Stats(a) => cmd_stats(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Harness concurrency from `TTM_THREADS`, default 1.
fn threads() -> Result<usize> {
    match std::env::var("TTM_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Input(format!(
                "TTM_THREADS must be a positive integer, got `{v}`"
            ))),
        },
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut spec = ShiftSpec::new(a.kind, a.n, a.seed);
    spec.segments = a.segments;
    if let Some(r) = a.radius {
        spec.radius = r;
    }
    if let Some(s) = a.noise {
        spec.noise = s;
    }
    let ds = generate(&spec)?;
    write_csv(&ds, &a.out)
}

#[derive(Serialize)]
struct ResultFile<'a> {
    config: &'a RunConfigFile,
    #[serde(flatten)]
    result: &'a RunResult,
}

#[derive(Serialize)]
struct LrTrial {
    lr: f64,
    best_val_metric: f64,
    best_epoch: usize,
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = RunConfigFile::load(&a.config)?;
    let ds = cfg.load_dataset()?;
    let splits = cfg.splits(&ds)?;
    let spec = cfg.model_spec(&ds);

    let lrs: Vec<f64> = if a.lr_grid {
        LR_GRID.to_vec()
    } else {
        vec![cfg.train.lr]
    };
    let mut trials = Vec::new();
    let mut best: Option<(RunConfigFile, tempmod::model::Model, RunResult)> = None;
    for lr in lrs {
        let mut c = cfg.clone();
        c.train.lr = lr;
        let (model, run) = train(spec.clone(), &ds, &splits, &c.train_config())?;
        trials.push(LrTrial {
            lr,
            best_val_metric: run.best_val_metric,
            best_epoch: run.best_epoch,
        });
        let better = match &best {
            None => true,
            Some((_, _, b)) => match ds.task {
                Task::BinaryClassification => run.best_val_metric > b.best_val_metric,
                Task::Regression => run.best_val_metric < b.best_val_metric,
            },
        };
        if better {
            best = Some((c, model, run));
        }
    }
    let (chosen, model, run) = best.expect("at least one learning rate");

    fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    save_model(&model, a.out_dir.join("model.ttm"))?;
    let file = ResultFile {
        config: &chosen,
        result: &run,
    };
    write(&a.out_dir.join("result.json"), &json(&file)?)?;
    if a.lr_grid {
        write(&a.out_dir.join("lr_grid.json"), &json(&trials)?)?;
    }
    let value = run.test_metrics.selection(ds.task).unwrap_or(f64::NAN);
    println!(
        "variant={} metric={}:{:.6} best_epoch={}",
        run.variant, run.metric, value, run.best_epoch
    );
    Ok(())
}

fn mean_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = out
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}_mean.{ext}"))
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let cfg = RunConfigFile::load(&a.config)?;
    let ds = cfg.load_dataset()?;
    let splits = cfg.splits(&ds)?;
    let report = ablate_placements(
        &cfg.model_spec(&ds),
        &ds,
        &splits,
        &cfg.train_config(),
        &a.seeds,
        threads()?,
    )?;
    write(&a.out, &ablation_csv(&report))?;
    write(&mean_path(&a.out), &ablation_mean_csv(&report))?;
    for r in &report.mean {
        println!(
            "in={} rep={} out={} {}={:.6} improvement_pct={:.3} rank={}",
            u8::from(r.input),
            u8::from(r.representation),
            u8::from(r.output),
            report.metric,
            r.metric,
            r.improvement_pct,
            r.rank
        );
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let cfg = RunConfigFile::load(&a.config)?;
    let ds = cfg.load_dataset()?;
    let splits = cfg.splits(&ds)?;
    let rows = sweep_embedding_dim(
        &cfg.model_spec(&ds),
        &ds,
        &splits,
        &cfg.train_config(),
        &a.dims,
        threads()?,
    )?;
    let mut body = String::from("variant,d_embedding,metric,value\n");
    for r in &rows {
        body.push_str(&format!("{},{},{},{}\n", r.variant, r.d_embedding, r.metric, r.value));
    }
    write(&a.out, &body)
}

fn cmd_pilot(a: PilotArgs) -> Result<()> {
    let defaults = PilotConfig::default();
    let cfg = PilotConfig {
        kinds: if a.kinds.is_empty() {
            defaults.kinds.clone()
        } else {
            a.kinds
        },
        n: a.n,
        seeds: a.seeds,
        svg: a.svg,
        threads: threads()?,
        ..defaults
    };
    let report = pilot(&cfg, Some(&a.out_dir))?;
    for k in &report.kinds {
        println!(
            "kind={} static_accuracy={:.4} modulated_accuracy={:.4}",
            k.kind.short_name(),
            k.mean_static_accuracy,
            k.mean_modulated_accuracy
        );
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let ds = load_csv(
        &a.data,
        &CsvOptions {
            label_col: a.label_col,
            time_col: a.time_col,
            ..CsvOptions::default()
        },
    )?;
    write_stats_csv(&temporal_stats(&ds, a.windows)?, &a.out)
}
