use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tempmod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempmod"))
        .args(args)
        .env_remove("TTM_THREADS")
        .output()
        .expect("spawn tempmod")
}

fn ok(args: &[&str]) -> String {
    let out = tempmod(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small, fast config over a generated dataset.
fn write_config(dir: &Path, name: &str, kind: &str, variant: &str, extra_model: &str) -> std::path::PathBuf {
    let body = format!(
        r#"{{
  "data": {{ "generator": {{ "kind": "{kind}", "n": 400, "seed": 1 }} }},
  "model": {{ "variant": "{variant}", "hidden": [16, 16], "d_embedding": 8,
             "orders": {{ "year": 2, "month": 2, "day": 2, "hour": 2 }}, "h_mod": 8{extra_model} }},
  "train": {{ "batch_size": 64, "max_epochs": 6, "patience": 3, "seed": 7 }}
}}"#
    );
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn generate_writes_header_and_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        ok(&[
            "generate",
            "--kind",
            "concept-shift",
            "--n",
            "10",
            "--seed",
            "0",
            "--out",
            s(p),
        ]);
    }
    let text = fs::read_to_string(&a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x0,x1,y,t");
    assert_eq!(lines.len(), 11);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn bad_arguments_exit_with_usage() {
    let out = tempmod(&["generate", "--kind", "bogus", "--n", "10", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
    assert_eq!(tempmod(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(tempmod(&["generate", "--kind", "concept-shift"]).status.code(), Some(2));
}

#[test]
fn io_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing/dir/a.csv");
    let r = tempmod(&["generate", "--kind", "no-shift", "--n", "5", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    let r = tempmod(&[
        "train",
        "--config",
        s(&dir.path().join("nope.json")),
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn invalid_config_names_file_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(
        &p,
        r#"{"data": {"generator": {"kind": "no-shift", "n": 50}}, "model": {"d_embedding": 12}}"#,
    )
    .unwrap();
    let r = tempmod(&["train", "--config", s(&p), "--out-dir", s(dir.path())]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("bad.json") && err.contains("model.d_embedding"), "{err}");

    fs::write(
        &p,
        r#"{"data": {"generator": {"kind": "no-shift", "n": 50}}, "train": {"epochs": 3}}"#,
    )
    .unwrap();
    let r = tempmod(&["train", "--config", s(&p), "--out-dir", s(dir.path())]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("epochs"));
}

#[test]
fn train_writes_artifacts_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "static.json", "no-shift", "static", "");
    let out = dir.path().join("run");
    let line = ok(&["train", "--config", s(&cfg), "--out-dir", s(&out)]);
    let line = line.trim();
    assert!(line.starts_with("variant=static metric=auc:"), "{line}");
    assert!(line.contains(" best_epoch="), "{line}");
    assert!(out.join("model.ttm").is_file());
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    for key in ["best_epoch", "history", "test_metrics", "seed", "config"] {
        assert!(result.get(key).is_some(), "missing {key}");
    }
    assert_eq!(result["config"]["train"]["batch_size"], 64);
}

#[test]
fn train_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.json", "concept-shift", "modulated", "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["train", "--config", s(&cfg), "--out-dir", s(out)]);
    }
    for f in ["model.ttm", "result.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn modulated_and_static_share_the_initial_loss() {
    let dir = tempfile::tempdir().unwrap();
    let loss = |variant: &str| {
        let cfg = write_config(dir.path(), &format!("{variant}.json"), "concept-shift", variant, "");
        let out = dir.path().join(variant);
        ok(&["train", "--config", s(&cfg), "--out-dir", s(&out)]);
        let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
        r["initial_train_loss"].as_f64().unwrap()
    };
    assert_eq!(loss("static"), loss("modulated"));
}

#[test]
fn lr_grid_records_each_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", "no-shift", "static", "");
    let out = dir.path().join("grid");
    ok(&["train", "--config", s(&cfg), "--out-dir", s(&out), "--lr-grid"]);
    let trials: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("lr_grid.json")).unwrap()).unwrap();
    let lrs: Vec<f64> = trials
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["lr"].as_f64().unwrap())
        .collect();
    assert_eq!(lrs, vec![3e-4, 1e-3, 3e-3]);
    let best = trials
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["best_val_metric"].as_f64().unwrap())
        .fold(f64::MIN, f64::max);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(r["best_val_metric"].as_f64().unwrap(), best);
}

#[test]
fn ablate_writes_eight_rows_per_seed_and_the_mean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.json", "concept-shift", "modulated", "");
    let out = dir.path().join("abl.csv");
    let stdout = ok(&["ablate", "--config", s(&cfg), "--seeds", "1,2", "--out", s(&out)]);
    assert_eq!(stdout.lines().count(), 8);

    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "in,rep,out,metric,improvement_pct");
    assert_eq!(lines.len(), 1 + 16);
    let metric = |line: &str| line.split(',').nth(3).unwrap().parse::<f64>().unwrap();

    let mean_text = fs::read_to_string(dir.path().join("abl_mean.csv")).unwrap();
    let mean: Vec<&str> = mean_text.lines().collect();
    assert_eq!(mean[0], "in,rep,out,metric,improvement_pct,rank");
    assert_eq!(mean.len(), 9);
    for k in 0..8 {
        let expect = (metric(lines[1 + k]) + metric(lines[9 + k])) / 2.0;
        assert_eq!(metric(mean[1 + k]), expect, "row {k}");
        assert_eq!(&mean[1 + k][..6], &lines[1 + k][..6]);
    }
}

#[test]
fn sweep_emits_a_row_per_variant_and_width() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "w.json", "no-shift", "modulated", "");
    let out = dir.path().join("sweep.csv");
    ok(&["sweep", "--config", s(&cfg), "--dims", "0,4,8", "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().nth(1).unwrap().starts_with("embedding,0,auc,"));
}

#[test]
fn stats_windows_and_skewness() {
    let dir = tempfile::tempdir().unwrap();
    // Feature `b` is 1 in k of n rows per window; its skewness is the
    // Bernoulli value (1 − 2p) / sqrt(p(1 − p)) with p = k/n.
    let mut body = String::from("a,b,y,t\n");
    for i in 0..24 {
        let b = u8::from(i % 12 < 1 + i / 12);
        body.push_str(&format!("{},{b},{},{}\n", i * i, i % 2, 1000 + i));
    }
    let data = dir.path().join("d.csv");
    fs::write(&data, body).unwrap();

    let out = dir.path().join("s.csv");
    ok(&["stats", "--data", s(&data), "--windows", "2", "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2 * 2);
    let bernoulli = |p: f64| (1.0 - 2.0 * p) / (p * (1.0 - p)).sqrt();
    for (w, k) in [(0usize, 1.0), (1, 2.0)] {
        let row = &rows[2 * w + 1];
        assert_eq!(row[3], "b");
        let skew: f64 = row[6].parse().unwrap();
        assert!((skew - bernoulli(k / 12.0)).abs() < 1e-12, "window {w}: {skew}");
    }

    let gen = dir.path().join("g.csv");
    ok(&["generate", "--kind", "covariate-shift", "--n", "240", "--out", s(&gen)]);
    ok(&["stats", "--data", s(&gen), "--windows", "12", "--out", s(&out)]);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1 + 12 * 2);

    ok(&["stats", "--data", s(&gen), "--windows", "1", "--out", s(&out)]);
    let one = fs::read_to_string(&out).unwrap();
    let x0: Vec<f64> = fs::read_to_string(&gen)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    let mean = x0.iter().sum::<f64>() / x0.len() as f64;
    let got: f64 = one.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!((got - mean).abs() < 1e-12);
}

#[test]
fn pilot_tree_is_complete_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let stdout = ok(&["pilot", "--out-dir", s(out), "--n", "200", "--seeds", "0"]);
        assert_eq!(stdout.lines().count(), 4);
    }
    for kind in ["concept", "covariate", "label", "none"] {
        let d = a.join(kind);
        for k in 0..5 {
            for model in ["static", "modulated"] {
                assert!(d.join(format!("grids/{model}_seg{k}.csv")).is_file());
            }
            assert!(d.join(format!("hist/seg{k}.csv")).is_file());
        }
        for f in ["metrics.json", "grids/modulated_seg2.csv", "hist/seg4.csv"] {
            assert_eq!(
                fs::read(d.join(f)).unwrap(),
                fs::read(b.join(kind).join(f)).unwrap(),
                "{kind}/{f}"
            );
        }
    }
}
