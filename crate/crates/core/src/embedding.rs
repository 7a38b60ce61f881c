//! Timestamp featurization `ψ(t)`: fixed Fourier features over calendar-scale
//! periods plus a normalized linear trend, followed by a learned projection.
//!
//! Raw layout, in order: for each period (year, month, day, hour) and each
//! order `k = 1..=order`, the pair `sin(2πk·t/P), cos(2πk·t/P)`; then the trend
//! `(t − t_min)/(t_max − t_min)` when enabled. Phases are anchored at epoch 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Linear, Matrix, Parameter};

pub const HOUR_SECONDS: f64 = 3_600.0;
pub const DAY_SECONDS: f64 = 86_400.0;
/// 365.2425 days.
pub const YEAR_SECONDS: f64 = 31_556_952.0;
pub const MONTH_SECONDS: f64 = YEAR_SECONDS / 12.0;

pub const DEFAULT_ORDER: usize = 128;
pub const DEFAULT_D_EMBEDDING: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodName {
    Year,
    Month,
    Day,
    Hour,
}

impl PeriodName {
    pub fn seconds(self) -> f64 {
        match self {
            PeriodName::Year => YEAR_SECONDS,
            PeriodName::Month => MONTH_SECONDS,
            PeriodName::Day => DAY_SECONDS,
            PeriodName::Hour => HOUR_SECONDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSpec {
    pub name: PeriodName,
    pub period_seconds: f64,
    pub order: usize,
}

impl PeriodSpec {
    pub fn new(name: PeriodName, order: usize) -> Self {
        Self {
            name,
            period_seconds: name.seconds(),
            order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub periods: Vec<PeriodSpec>,
    pub trend: bool,
    /// Output width of the projection; 0 disables the embedding.
    pub d_embedding: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self::with_orders(DEFAULT_ORDER, DEFAULT_D_EMBEDDING)
    }
}

impl EmbeddingConfig {
    /// Year, month, day and hour periods, each with the same order.
    pub fn with_orders(order: usize, d_embedding: usize) -> Self {
        Self {
            periods: [PeriodName::Year, PeriodName::Month, PeriodName::Day, PeriodName::Hour]
                .into_iter()
                .map(|p| PeriodSpec::new(p, order))
                .collect(),
            trend: true,
            d_embedding,
        }
    }

    /// The first yearly harmonic only, without trend. Phases outside the
    /// training window stay on the same circle, so a smooth map of ψ can
    /// extrapolate to them.
    pub fn annual(d_embedding: usize) -> Self {
        Self {
            periods: vec![PeriodSpec::new(PeriodName::Year, 1)],
            trend: false,
            d_embedding,
        }
    }

    pub fn raw_width(&self) -> usize {
        self.periods.iter().map(|p| 2 * p.order).sum::<usize>() + usize::from(self.trend)
    }

    pub fn enabled(&self) -> bool {
        self.d_embedding > 0
    }

    pub fn validate(&self) -> Result<(), String> {
        let d = self.d_embedding;
        if d != 0 && !d.is_power_of_two() {
            return Err(format!("d_embedding must be 0 or a power of two, got {d}"));
        }
        for p in &self.periods {
            if !(p.period_seconds > 0.0 && p.period_seconds.is_finite()) {
                return Err(format!("period {:?} must be positive", p.name));
            }
        }
        if d > 0 && self.raw_width() == 0 {
            return Err("embedding has no periodic or trend component".into());
        }
        Ok(())
    }
}

/// Affine map of timestamps onto the training range: `t_min → 0`, `t_max → 1`.
/// Later timestamps map above 1; no clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendNormalizer {
    pub t_min: f64,
    pub t_max: f64,
}

impl TrendNormalizer {
    pub fn new(t_min: f64, t_max: f64) -> Result<Self> {
        if !(t_max > t_min) || !t_min.is_finite() || !t_max.is_finite() {
            return Err(Error::Input(format!(
                "trend range needs t_max > t_min, got [{t_min}, {t_max}]"
            )));
        }
        Ok(Self { t_min, t_max })
    }

    pub fn fit(timestamps: &[f64]) -> Result<Self> {
        let (lo, hi) = timestamps
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                (lo.min(t), hi.max(t))
            });
        Self::new(lo, hi)
    }

    pub fn apply(&self, t: f64) -> f64 {
        (t - self.t_min) / (self.t_max - self.t_min)
    }
}

fn push_period_block(out: &mut Vec<f64>, t: f64, period: f64, order: usize) {
    let tau = std::f64::consts::TAU;
    // Reduce modulo the period before scaling so large epoch values keep
    // full phase precision; for integer t and integer P this is exact.
    let r = t.rem_euclid(period);
    for k in 1..=order {
        let phase = (k as f64 * r) % period;
        let (s, c) = (tau * phase / period).sin_cos();
        out.push(s);
        out.push(c);
    }
}

/// Fixed (non-learned) features of one timestamp.
pub fn raw_features(t: f64, config: &EmbeddingConfig, normalizer: &TrendNormalizer) -> Vec<f64> {
    let mut out = Vec::with_capacity(config.raw_width());
    for p in &config.periods {
        push_period_block(&mut out, t, p.period_seconds, p.order);
    }
    if config.trend {
        out.push(normalizer.apply(t));
    }
    out
}

/// One row of raw features per timestamp.
pub fn raw_feature_matrix(timestamps: &[f64], config: &EmbeddingConfig, normalizer: &TrendNormalizer) -> Matrix {
    let width = config.raw_width();
    let mut data = Vec::with_capacity(timestamps.len() * width);
    for &t in timestamps {
        data.extend(raw_features(t, config, normalizer));
    }
    Matrix::from_raw(timestamps.len(), width, data)
}

/// `ψ(t) = W·raw(t) + b`, learned end to end with the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalEmbedding {
    pub config: EmbeddingConfig,
    pub normalizer: TrendNormalizer,
    pub projection: Linear,
}

impl TemporalEmbedding {
    pub fn new<R: Rng + ?Sized>(config: EmbeddingConfig, normalizer: TrendNormalizer, rng: &mut R) -> Result<Self> {
        config.validate().map_err(Error::Input)?;
        let projection = Linear::init_uniform(config.raw_width(), config.d_embedding, rng);
        Ok(Self {
            config,
            normalizer,
            projection,
        })
    }

    pub fn from_projection(config: EmbeddingConfig, normalizer: TrendNormalizer, projection: Linear) -> Result<Self> {
        if projection.input_dim() != config.raw_width() || projection.output_dim() != config.d_embedding {
            return Err(Error::dim(
                "TemporalEmbedding",
                format!("{}x{}", config.d_embedding, config.raw_width()),
                format!("{}x{}", projection.output_dim(), projection.input_dim()),
            ));
        }
        Ok(Self {
            config,
            normalizer,
            projection,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.d_embedding
    }

    pub fn raw(&self, timestamps: &[f64]) -> Matrix {
        raw_feature_matrix(timestamps, &self.config, &self.normalizer)
    }

    /// `ψ` for a batch of precomputed raw features.
    pub fn forward(&self, raw: &Matrix) -> Result<Matrix> {
        self.projection.forward(raw)
    }

    pub fn embed(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.forward(&self.raw(&[t]))?.into_vec())
    }

    /// Accumulates projection gradients; raw features are constants of `t`.
    pub fn backward(&mut self, raw: &Matrix, upstream: &Matrix) -> Result<()> {
        self.projection.backward_params(raw, upstream)
    }

    pub fn params(&self) -> [&Parameter; 2] {
        self.projection.params()
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        self.projection.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn hour_only(order: usize) -> EmbeddingConfig {
        EmbeddingConfig {
            periods: vec![PeriodSpec::new(PeriodName::Hour, order)],
            trend: false,
            d_embedding: 1,
        }
    }

    fn norm() -> TrendNormalizer {
        TrendNormalizer::new(1_600_000_000.0, 1_700_000_000.0).unwrap()
    }

    #[test]
    fn default_layout_width() {
        let cfg = EmbeddingConfig::default();
        assert_eq!(cfg.raw_width(), 2 * 128 * 4 + 1);
        assert_eq!(cfg.d_embedding, 128);
        assert_eq!(MONTH_SECONDS, 2_629_746.0);
    }

    #[test]
    fn phase_is_anchored_at_epoch_zero() {
        assert_eq!(raw_features(0.0, &hour_only(1), &norm()), vec![0.0, 1.0]);
        let quarter = raw_features(900.0, &hour_only(1), &norm());
        assert!((quarter[0] - 1.0).abs() < 1e-15 && quarter[1].abs() < 1e-15);
    }

    #[test]
    fn trend_endpoints_and_extrapolation() {
        let n = norm();
        let cfg = EmbeddingConfig {
            periods: vec![],
            trend: true,
            d_embedding: 1,
        };
        assert_eq!(raw_features(n.t_min, &cfg, &n), vec![0.0]);
        assert_eq!(raw_features(n.t_max, &cfg, &n), vec![1.0]);
        assert!(raw_features(n.t_max + 1.0, &cfg, &n)[0] > 1.0);
        assert!(TrendNormalizer::fit(&[5.0, 5.0]).is_err());
    }

    #[test]
    fn trend_is_affine() {
        let n = norm();
        let (a, b, c) = (n.apply(1.61e9), n.apply(1.63e9), n.apply(1.65e9));
        assert!(((b - a) - (c - b)).abs() < 1e-15);
    }

    #[test]
    fn every_block_is_periodic() {
        let cfg = EmbeddingConfig::with_orders(128, 8);
        let n = norm();
        for &t in &[0.0, 1_650_000_123.0, 1_234_567.0, 1_699_999_999.0] {
            let base = raw_features(t, &cfg, &n);
            let mut offset = 0;
            for p in &cfg.periods {
                let shifted = raw_features(t + p.period_seconds, &cfg, &n);
                for k in offset..offset + 2 * p.order {
                    assert!((base[k] - shifted[k]).abs() < 1e-9, "{:?} k={k}", p.name);
                }
                offset += 2 * p.order;
            }
            assert!(base[..offset].iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn validation() {
        assert!(EmbeddingConfig::with_orders(4, 0).validate().is_ok());
        assert!(EmbeddingConfig::with_orders(4, 12).validate().is_err());
        let empty = EmbeddingConfig {
            periods: vec![],
            trend: false,
            d_embedding: 2,
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn embed_is_deterministic_and_zero_projection_is_zero() {
        let cfg = EmbeddingConfig::with_orders(3, 4);
        let emb = TemporalEmbedding::new(cfg.clone(), norm(), &mut rng::stream(0, "e")).unwrap();
        assert_eq!(emb.embed(1.65e9).unwrap(), emb.embed(1.65e9).unwrap());

        let zero = TemporalEmbedding::from_projection(cfg.clone(), norm(), Linear::zeros(cfg.raw_width(), 4)).unwrap();
        assert_eq!(zero.embed(1.65e9).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn year_shift_leaves_embedding_unchanged_without_trend() {
        let mut cfg = EmbeddingConfig::with_orders(16, 8);
        cfg.periods.retain(|p| p.name == PeriodName::Year);
        cfg.trend = false;
        let emb = TemporalEmbedding::new(cfg, norm(), &mut rng::stream(1, "e")).unwrap();
        let t = 1_650_000_000.0;
        let a = emb.embed(t).unwrap();
        let b = emb.embed(t + YEAR_SECONDS).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_of_scalar_projection_is_scaled_raw_vector() {
        let cfg = EmbeddingConfig::with_orders(2, 1);
        let n = norm();
        let mut emb = TemporalEmbedding::new(cfg, n, &mut rng::stream(2, "e")).unwrap();
        let raw = emb.raw(&[1.62e9]);
        emb.backward(&raw, &Matrix::from_vec(1, 1, vec![0.0]).unwrap()).unwrap();
        assert!(emb.projection.weight.grad.as_slice().iter().all(|&g| g == 0.0));

        emb.backward(&raw, &Matrix::from_vec(1, 1, vec![2.5]).unwrap()).unwrap();
        for (g, r) in emb.projection.weight.grad.as_slice().iter().zip(raw.as_slice()) {
            assert_eq!(*g, 2.5 * r);
        }
        assert_eq!(emb.projection.bias.grad.as_slice(), &[2.5]);
    }
}
