//! JSON run configuration shared by the `train`, `ablate` and `sweep`
//! commands.
//!
//! ```json
//! {
//!   "data": {
//!     "generator": { "kind": "concept-shift", "n": 10000, "seed": 0 },
//!     "split": { "kind": "temporal", "ratios": [0.7, 0.15, 0.15] }
//!   },
//!   "model": { "variant": "modulated", "placements": { "input": true } },
//!   "train": { "batch_size": 128, "seed": 0 }
//! }
//! ```
//!
//! Every field has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    generate, load_csv, random_split, temporal_split, CsvOptions, Dataset, ShiftSpec, SplitAssignment, Task,
};
use crate::embedding::{EmbeddingConfig, PeriodName, PeriodSpec, DEFAULT_D_EMBEDDING, DEFAULT_ORDER};
use crate::error::{Error, Result};
use crate::model::{BackboneSpec, ModelSpec, Placements, Variant};
use crate::modulation::DEFAULT_H_MOD;
use crate::numeric::AdamWConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        Self {
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// CSV file, relative to the config file's directory.
    pub path: Option<PathBuf>,
    pub generator: Option<ShiftSpec>,
    pub label_col: String,
    pub time_col: String,
    pub categorical_cols: Vec<String>,
    pub task: Option<Task>,
    pub split: SplitSection,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            generator: None,
            label_col: "y".into(),
            time_col: "t".into(),
            categorical_cols: Vec::new(),
            task: None,
            split: SplitSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Temporal,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub kind: SplitKind,
    pub ratios: [f64; 3],
    /// Shuffle seed for random splits.
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            kind: SplitKind::Temporal,
            ratios: [0.7, 0.15, 0.15],
            seed: 0,
        }
    }
}

/// Fourier order per period; 0 drops the period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Orders {
    pub year: usize,
    pub month: usize,
    pub day: usize,
    pub hour: usize,
}

impl Default for Orders {
    fn default() -> Self {
        Self {
            year: DEFAULT_ORDER,
            month: DEFAULT_ORDER,
            day: DEFAULT_ORDER,
            hour: DEFAULT_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub variant: Variant,
    pub hidden: Vec<usize>,
    pub d_embedding: usize,
    pub orders: Orders,
    pub trend: bool,
    pub placements: Placements,
    pub h_mod: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: Variant::Modulated,
            hidden: vec![256, 256],
            d_embedding: DEFAULT_D_EMBEDDING,
            orders: Orders::default(),
            trend: true,
            placements: Placements::default(),
            h_mod: DEFAULT_H_MOD,
        }
    }
}

impl ModelSection {
    pub fn embedding(&self) -> EmbeddingConfig {
        let o = &self.orders;
        let periods = [
            (PeriodName::Year, o.year),
            (PeriodName::Month, o.month),
            (PeriodName::Day, o.day),
            (PeriodName::Hour, o.hour),
        ]
        .into_iter()
        .filter(|&(_, order)| order > 0)
        .map(|(name, order)| PeriodSpec::new(name, order))
        .collect();
        EmbeddingConfig {
            periods,
            trend: self.trend,
            d_embedding: self.d_embedding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            lr: t.adamw.lr,
            weight_decay: t.adamw.weight_decay,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            shuffle: t.shuffle,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            adamw: AdamWConfig {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..AdamWConfig::default()
            },
            seed: self.seed,
            shuffle: self.shuffle,
        }
    }
}

impl RunConfigFile {
    /// Parses and validates; every error names the file and the offending key.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|message| Error::Config {
            path: path.to_path_buf(),
            message,
        })?;
        if let (Some(p), Some(dir)) = (&cfg.data.path, path.parent()) {
            if p.is_relative() {
                cfg.data.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let d = &self.data;
        match (&d.path, &d.generator) {
            (Some(_), Some(_)) => return Err("data: set either `path` or `generator`, not both".into()),
            (None, None) => return Err("data: one of `path` or `generator` is required".into()),
            (None, Some(g)) => g.validate().map_err(|e| format!("data.generator: {e}"))?,
            (Some(_), None) => {}
        }
        let r = d.split.ratios;
        if r.iter().any(|v| !(*v > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(format!("data.split.ratios: must be positive and sum to 1, got {r:?}"));
        }
        let m = &self.model;
        if m.hidden.is_empty() || m.hidden.contains(&0) {
            return Err(format!("model.hidden: need positive widths, got {:?}", m.hidden));
        }
        m.embedding()
            .validate()
            .map_err(|e| format!("model.d_embedding: {e}"))?;
        if let Some(&i) = m.placements.representation.iter().find(|&&i| i >= m.hidden.len()) {
            return Err(format!(
                "model.placements.representation: layer {i} out of range for {} hidden layers",
                m.hidden.len()
            ));
        }
        if m.h_mod == 0 {
            return Err("model.h_mod: must be positive".into());
        }
        self.train.to_config().validate().map_err(|e| format!("train: {e}"))
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let d = &self.data;
        match (&d.path, &d.generator) {
            (Some(path), _) => load_csv(
                path,
                &CsvOptions {
                    label_col: d.label_col.clone(),
                    time_col: d.time_col.clone(),
                    categorical_cols: d.categorical_cols.clone(),
                    task: d.task,
                },
            ),
            (None, Some(g)) => {
                let ds = generate(g)?;
                match d.task {
                    Some(t) if t != ds.task => Err(Error::Input(format!(
                        "data.task: generators produce binary classification, got {t:?}"
                    ))),
                    _ => Ok(ds),
                }
            }
            (None, None) => Err(Error::Input("data: no source".into())),
        }
    }

    pub fn splits(&self, ds: &Dataset) -> Result<SplitAssignment> {
        let s = &self.data.split;
        match s.kind {
            SplitKind::Temporal => temporal_split(ds, s.ratios),
            SplitKind::Random => random_split(ds, s.ratios, s.seed),
        }
    }

    pub fn model_spec(&self, ds: &Dataset) -> ModelSpec {
        let m = &self.model;
        ModelSpec {
            backbone: BackboneSpec {
                input_width: ds.width(),
                hidden: m.hidden.clone(),
            },
            variant: m.variant,
            embedding: m.embedding(),
            placements: m.placements.clone(),
            h_mod: m.h_mod,
            task: ds.task,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.to_config()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"data": {"generator": {"kind": "no-shift", "n": 100}}}"#;

    #[test]
    fn defaults_fill_every_section() {
        let cfg = RunConfigFile::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.model.hidden, vec![256, 256]);
        assert_eq!(cfg.model.embedding(), EmbeddingConfig::default());
        assert_eq!(cfg.train_config(), TrainConfig::default());
        assert_eq!(cfg.data.split.kind, SplitKind::Temporal);
        assert_eq!(cfg.data.generator.as_ref().unwrap().radius, 2.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfigFile::from_json(r#"{"data": {"generator": {"kind": "no-shift", "n": 10}}, "modle": {}}"#)
            .unwrap_err();
        assert!(err.contains("modle"), "{err}");
        let err = RunConfigFile::from_json(
            r#"{"data": {"generator": {"kind": "no-shift", "n": 10}}, "train": {"learning_rate": 1}}"#,
        )
        .unwrap_err();
        assert!(err.contains("learning_rate"), "{err}");
    }

    #[test]
    fn validation_names_the_key() {
        let cases = [
            (r#"{"data": {}}"#, "data"),
            (
                r#"{"data": {"generator": {"kind": "no-shift", "n": 0}}}"#,
                "data.generator",
            ),
            (
                r#"{"data": {"generator": {"kind": "no-shift", "n": 9}, "split": {"ratios": [0.5, 0.5, 0.5]}}}"#,
                "data.split.ratios",
            ),
            (
                r#"{"data": {"generator": {"kind": "no-shift", "n": 9}}, "model": {"d_embedding": 3}}"#,
                "model.d_embedding",
            ),
            (
                r#"{"data": {"generator": {"kind": "no-shift", "n": 9}}, "model": {"hidden": []}}"#,
                "model.hidden",
            ),
            (
                r#"{"data": {"generator": {"kind": "no-shift", "n": 9}}, "train": {"patience": 0}}"#,
                "train",
            ),
            (
                r#"{"data": {"generator": {"kind": "no-shift", "n": 9}}, "model": {"placements": {"representation": [5]}}}"#,
                "model.placements.representation",
            ),
        ];
        for (json, key) in cases {
            let err = RunConfigFile::from_json(json).unwrap_err();
            assert!(err.starts_with(key), "{json}: {err}");
        }
    }

    #[test]
    fn zero_orders_drop_periods() {
        let cfg = RunConfigFile::from_json(
            r#"{"data": {"generator": {"kind": "concept-shift", "n": 50}},
                "model": {"orders": {"year": 1, "month": 0, "day": 0, "hour": 0}, "trend": false}}"#,
        )
        .unwrap();
        let e = cfg.model.embedding();
        assert_eq!(e.raw_width(), 2);
        assert_eq!(e.periods[0].name, PeriodName::Year);
    }

    #[test]
    fn load_resolves_relative_paths_and_reports_the_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "a,y,t\n1,0,1\n2,1,2\n3,0,3\n4,1,4\n").unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"data": {"path": "d.csv"}, "model": {"variant": "static"}}"#).unwrap();
        let cfg = RunConfigFile::load(&p).unwrap();
        let ds = cfg.load_dataset().unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(cfg.model_spec(&ds).backbone.input_width, 1);

        std::fs::write(&p, r#"{"data": {"path": "d.csv"}, "model": {"h_mod": 0}}"#).unwrap();
        match RunConfigFile::load(&p) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, p);
                assert!(message.starts_with("model.h_mod"));
            }
            other => panic!("{other:?}"),
        }
    }
}
