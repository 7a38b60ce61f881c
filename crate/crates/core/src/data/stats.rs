use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::Dataset;
use crate::error::{Error, Result};

/// Mean, population standard deviation and sample skewness `g1 = m3 / m2^1.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureMoments {
    pub mean: f64,
    pub std: f64,
    /// `None` with fewer than 3 values or zero variance.
    pub skewness: Option<f64>,
}

impl FeatureMoments {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (mut m2, mut m3) = (0.0, 0.0);
        for &v in values {
            let d = v - mean;
            m2 += d * d;
            m3 += d * d * d;
        }
        m2 /= n;
        m3 /= n;
        let skewness = (values.len() >= 3 && m2 > 0.0).then(|| m3 / m2.powf(1.5));
        Self {
            mean,
            std: m2.sqrt(),
            skewness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowStat {
    pub window: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub feature: String,
    #[serde(flatten)]
    pub moments: FeatureMoments,
}

/// Per-feature moments over `n_windows` equal-count chronological windows.
pub fn temporal_stats(ds: &Dataset, n_windows: usize) -> Result<Vec<WindowStat>> {
    let n = ds.len();
    if n_windows == 0 || n < n_windows {
        return Err(Error::Input(format!(
            "cannot cut {n} rows into {n_windows} nonempty windows"
        )));
    }
    let order = ds.chronological_order();
    let mut out = Vec::with_capacity(n_windows * ds.width());
    for w in 0..n_windows {
        let rows = &order[w * n / n_windows..(w + 1) * n / n_windows];
        let t_start = ds.t[rows[0]];
        let t_end = ds.t[*rows.last().expect("nonempty window")];
        for (j, name) in ds.feature_names.iter().enumerate() {
            let values: Vec<f64> = rows.iter().map(|&i| ds.x.get(i, j)).collect();
            out.push(WindowStat {
                window: w,
                t_start,
                t_end,
                feature: name.clone(),
                moments: FeatureMoments::of(&values),
            });
        }
    }
    Ok(out)
}

pub fn write_stats_csv(stats: &[WindowStat], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("window,t_start,t_end,feature,mean,std,skewness\n");
    for s in stats {
        let skew = s.moments.skewness.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.window, s.t_start, s.t_end, s.feature, s.moments.mean, s.moments.std, skew
        ));
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, ShiftKind, ShiftSpec, Task};
    use crate::numeric::Matrix;

    #[test]
    fn symmetric_window_has_zero_skew() {
        assert_eq!(FeatureMoments::of(&[-1.0, 0.0, 1.0]).skewness, Some(0.0));
    }

    #[test]
    fn constant_window_has_no_skew() {
        let m = FeatureMoments::of(&[4.0, 4.0, 4.0, 4.0]);
        assert_eq!(m.std, 0.0);
        assert_eq!(m.skewness, None);
        assert_eq!(FeatureMoments::of(&[1.0, 2.0]).skewness, None);
    }

    #[test]
    fn skewness_matches_brute_force_moments() {
        // m2 = 0.1875, m3 = 0.09375.
        let g1 = FeatureMoments::of(&[0.0, 0.0, 0.0, 1.0]).skewness.unwrap();
        let expected = 0.09375 / 0.1875f64.powf(1.5);
        assert!((g1 - expected).abs() < 1e-12);
        assert!((g1 - 1.154_700_538_379_251_5).abs() < 1e-12);
    }

    #[test]
    fn single_window_equals_global_moments() {
        let ds = generate(&ShiftSpec::new(ShiftKind::LabelShift, 300, 4)).unwrap();
        let stats = temporal_stats(&ds, 1).unwrap();
        assert_eq!(stats.len(), 2);
        for (j, s) in stats.iter().enumerate() {
            assert_eq!(s.moments, FeatureMoments::of(&ds.x.column(j)));
        }
    }

    #[test]
    fn windows_follow_time_order() {
        let ds = Dataset::new(
            Matrix::from_vec(6, 1, vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0]).unwrap(),
            vec![0.0; 6],
            vec![60.0, 50.0, 40.0, 30.0, 20.0, 10.0],
            vec!["a".into()],
            Task::Regression,
        )
        .unwrap();
        let stats = temporal_stats(&ds, 3).unwrap();
        assert_eq!(stats.len(), 3);
        assert_eq!((stats[0].t_start, stats[0].t_end), (10.0, 20.0));
        assert_eq!(stats[0].moments.mean, 1.5);
        assert_eq!(stats[2].moments.mean, 5.5);
        assert!(temporal_stats(&ds, 7).is_err());
    }
}
