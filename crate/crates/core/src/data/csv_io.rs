use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use super::{Dataset, Task};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvOptions {
    pub label_col: String,
    pub time_col: String,
    pub categorical_cols: Vec<String>,
    /// Inferred from the labels when absent.
    pub task: Option<Task>,
}

/// Category levels per categorical column, in first-appearance order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoricalVocab {
    pub columns: Vec<(String, Vec<String>)>,
}

impl CategoricalVocab {
    fn levels(&self, column: &str) -> Option<&[String]> {
        self.columns
            .iter()
            .find(|(c, _)| c == column)
            .map(|(_, l)| l.as_slice())
    }
}

enum ColumnRole {
    Numeric,
    Categorical,
    Label,
    Time,
}

fn parse_time(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    if let Ok(v) = cell.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    DateTime::parse_from_rfc3339(cell)
        .ok()
        .map(|dt| dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9)
}

/// Loads a dataset, building the categorical vocabulary from the file itself.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    load_csv_with_vocab(path, options, None).map(|(ds, _)| ds)
}

/// Loads a dataset. With a `vocab`, categories are encoded against it and
/// unseen levels become all-zero rows; otherwise levels are collected in
/// first-appearance order.
pub fn load_csv_with_vocab(
    path: impl AsRef<Path>,
    options: &CsvOptions,
    vocab: Option<&CategoricalVocab>,
) -> Result<(Dataset, CategoricalVocab)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Schema(format!("{}: empty file", path.display())));
    }
    for required in [&options.label_col, &options.time_col]
        .into_iter()
        .chain(&options.categorical_cols)
    {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Schema(format!(
                "{}: missing column `{required}`",
                path.display()
            )));
        }
    }
    let roles: Vec<ColumnRole> = headers
        .iter()
        .map(|h| {
            if *h == options.label_col {
                ColumnRole::Label
            } else if *h == options.time_col {
                ColumnRole::Time
            } else if options.categorical_cols.contains(h) {
                ColumnRole::Categorical
            } else {
                ColumnRole::Numeric
            }
        })
        .collect();

    let mut numeric_rows: Vec<Vec<f64>> = Vec::new();
    let mut categorical_rows: Vec<Vec<String>> = Vec::new();
    let mut y = Vec::new();
    let mut t = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let mut nums = Vec::new();
        let mut cats = Vec::new();
        for ((cell, role), name) in record.iter().zip(&roles).zip(&headers) {
            let parse_err = |message: &str| Error::Parse {
                row,
                column: name.clone(),
                message: format!("{message}: `{cell}`"),
            };
            match role {
                ColumnRole::Numeric | ColumnRole::Label => {
                    let v: f64 = cell
                        .trim()
                        .parse()
                        .ok()
                        .filter(|v: &f64| v.is_finite())
                        .ok_or_else(|| parse_err("not a finite number"))?;
                    if matches!(role, ColumnRole::Label) {
                        y.push(v);
                    } else {
                        nums.push(v);
                    }
                }
                ColumnRole::Time => t.push(parse_time(cell).ok_or_else(|| parse_err("not a timestamp"))?),
                ColumnRole::Categorical => cats.push(cell.trim().to_string()),
            }
        }
        numeric_rows.push(nums);
        categorical_rows.push(cats);
    }
    if y.is_empty() {
        return Err(Error::Schema(format!("{}: no data rows", path.display())));
    }

    let cat_names: Vec<&String> = headers
        .iter()
        .zip(&roles)
        .filter(|(_, r)| matches!(r, ColumnRole::Categorical))
        .map(|(h, _)| h)
        .collect();
    let vocab = match vocab {
        Some(v) => {
            for name in &cat_names {
                if v.levels(name).is_none() {
                    return Err(Error::Schema(format!("vocabulary lacks column `{name}`")));
                }
            }
            v.clone()
        }
        None => {
            let mut columns = Vec::new();
            for (c, name) in cat_names.iter().enumerate() {
                let mut levels: Vec<String> = Vec::new();
                for row in &categorical_rows {
                    if !levels.contains(&row[c]) {
                        levels.push(row[c].clone());
                    }
                }
                columns.push(((*name).clone(), levels));
            }
            CategoricalVocab { columns }
        }
    };

    let mut feature_names = Vec::new();
    for (h, role) in headers.iter().zip(&roles) {
        match role {
            ColumnRole::Numeric => feature_names.push(h.clone()),
            ColumnRole::Categorical => {
                for level in vocab.levels(h).unwrap_or_default() {
                    feature_names.push(format!("{h}={level}"));
                }
            }
            _ => {}
        }
    }
    let n = y.len();
    let mut data = Vec::with_capacity(n * feature_names.len());
    for (nums, cats) in numeric_rows.iter().zip(&categorical_rows) {
        let (mut ni, mut ci) = (0, 0);
        for (h, role) in headers.iter().zip(&roles) {
            match role {
                ColumnRole::Numeric => {
                    data.push(nums[ni]);
                    ni += 1;
                }
                ColumnRole::Categorical => {
                    for level in vocab.levels(h).unwrap_or_default() {
                        data.push(if *level == cats[ci] { 1.0 } else { 0.0 });
                    }
                    ci += 1;
                }
                _ => {}
            }
        }
    }
    let width = feature_names.len();
    let task = options.task.unwrap_or_else(|| Task::infer(&y));
    let ds = Dataset::new(Matrix::from_vec(n, width, data)?, y, t, feature_names, task)?;
    Ok((ds, vocab))
}

fn fmt_time(t: f64) -> String {
    if t.fract() == 0.0 && t.abs() < 9.0e15 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

/// Writes features, then `y`, then `t` (integer seconds when integral).
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&ds.feature_names.join(","));
    out.push_str(",y,t\n");
    for i in 0..ds.len() {
        for v in ds.x.row(i) {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{},{}\n", ds.y[i], fmt_time(ds.t[i])));
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn opts(cats: &[&str]) -> CsvOptions {
        CsvOptions {
            label_col: "y".into(),
            time_col: "t".into(),
            categorical_cols: cats.iter().map(|s| s.to_string()).collect(),
            task: None,
        }
    }

    #[test]
    fn numeric_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y,t\n1,2,0,10\n3,4,1,20\n5,6,1,30\n");
        let ds = load_csv(&p, &opts(&[])).unwrap();
        assert_eq!(ds.x.shape(), (3, 2));
        assert_eq!(ds.y, vec![0.0, 1.0, 1.0]);
        assert_eq!(ds.t, vec![10.0, 20.0, 30.0]);
        assert_eq!(ds.task, Task::BinaryClassification);
    }

    #[test]
    fn categoricals_one_hot_in_first_appearance_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.csv", "c,y,t\na,0,1\nb,1,2\na,0,3\n");
        let (ds, vocab) = load_csv_with_vocab(&p, &opts(&["c"]), None).unwrap();
        assert_eq!(ds.feature_names, vec!["c=a", "c=b"]);
        assert_eq!(ds.x.as_slice(), &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);

        let q = write(&dir, "d.csv", "c,y,t\nb,1,4\nz,0,5\n");
        let (test, _) = load_csv_with_vocab(&q, &opts(&["c"]), Some(&vocab)).unwrap();
        assert_eq!(test.x.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn rfc3339_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "r.csv",
            "x,y,t\n1,0.5,1970-01-01T00:01:00Z\n2,1.5,2020-01-01T00:00:00+00:00\n",
        );
        let ds = load_csv(&p, &opts(&[])).unwrap();
        assert_eq!(ds.t, vec![60.0, 1_577_836_800.0]);
        assert_eq!(ds.task, Task::Regression);
    }

    #[test]
    fn error_contracts() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "m.csv", "a,t\n1,2\n");
        assert!(matches!(load_csv(&p, &opts(&[])), Err(Error::Schema(_))));

        let p = write(&dir, "bad.csv", "a,y,t\n1,0,1\nfoo,1,2\n");
        match load_csv(&p, &opts(&[])) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "a");
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        let p = write(&dir, "empty.csv", "");
        assert!(load_csv(&p, &opts(&[])).is_err());

        let p = write(&dir, "hdr.csv", "a,y,t\n");
        assert!(matches!(load_csv(&p, &opts(&[])), Err(Error::Schema(_))));

        assert!(matches!(
            load_csv(dir.path().join("nope.csv"), &opts(&[])),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn write_then_load_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new(
            Matrix::from_rows(&[vec![0.1, -2.5], vec![1e-7, 3.0]]).unwrap(),
            vec![1.0, 0.0],
            vec![1_600_000_000.0, 1_600_000_001.0],
            vec!["x0".into(), "x1".into()],
            Task::BinaryClassification,
        )
        .unwrap();
        let p = dir.path().join("w.csv");
        write_csv(&ds, &p).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("x0,x1,y,t\n"));
        assert_eq!(load_csv(&p, &opts(&[])).unwrap(), ds);
    }
}
