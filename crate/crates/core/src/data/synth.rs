//! Two-feature Gaussian-class generators with controlled temporal shift.
//!
//! Row `i` of `n` sits at relative time `u = i/n` and timestamp
//! `SYNTH_EPOCH + floor(u · SYNTH_SPAN)`. Class 1 is drawn around `+μ(u)` and
//! class 0 around `−μ(u)` (plus the covariate drift), with isotropic noise σ.
//!
//! | kind       | class-1 mean        | drift        | P(y = 1)      |
//! |------------|---------------------|--------------|---------------|
//! | concept    | r·(cos 2πu, sin 2πu)| (0, 0)       | 0.5           |
//! | covariate  | (r, 0)              | (4u, 0)      | 0.5           |
//! | label      | (r, 0)              | (0, 0)       | 0.2 + 0.6u    |
//! | none       | (r, 0)              | (0, 0)       | 0.5           |
//!
//! Under concept shift the class means rotate once per year, so the
//! time-marginal class-conditionals are identical rings and no static
//! classifier beats chance, while at any fixed time the Bayes accuracy is
//! Φ(r/σ).

use serde::{Deserialize, Serialize};

use super::{Dataset, Task};
use crate::embedding::YEAR_SECONDS;
use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::rng;

/// 2020-01-01T00:00:00Z.
pub const SYNTH_EPOCH: f64 = 1_577_836_800.0;
pub const SYNTH_SPAN: f64 = YEAR_SECONDS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftKind {
    ConceptShift,
    CovariateShift,
    LabelShift,
    NoShift,
}

impl ShiftKind {
    pub const ALL: [ShiftKind; 4] = [
        ShiftKind::ConceptShift,
        ShiftKind::CovariateShift,
        ShiftKind::LabelShift,
        ShiftKind::NoShift,
    ];

    /// Short directory-style name.
    pub fn short_name(self) -> &'static str {
        match self {
            ShiftKind::ConceptShift => "concept",
            ShiftKind::CovariateShift => "covariate",
            ShiftKind::LabelShift => "label",
            ShiftKind::NoShift => "none",
        }
    }
}

impl std::str::FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concept-shift" | "concept" => Ok(ShiftKind::ConceptShift),
            "covariate-shift" | "covariate" => Ok(ShiftKind::CovariateShift),
            "label-shift" | "label" => Ok(ShiftKind::LabelShift),
            "no-shift" | "none" => Ok(ShiftKind::NoShift),
            other => Err(Error::Input(format!("unknown shift kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_segments() -> usize {
    5
}

fn default_radius() -> f64 {
    2.0
}

fn default_noise() -> f64 {
    0.5
}

impl ShiftSpec {
    pub fn new(kind: ShiftKind, n: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            seed,
            segments: default_segments(),
            radius: default_radius(),
            noise: default_noise(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Input("generator needs n > 0".into()));
        }
        if self.segments == 0 {
            return Err(Error::Input("generator needs at least one segment".into()));
        }
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            return Err(Error::Input(format!(
                "radius must be non-negative, got {}",
                self.radius
            )));
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return Err(Error::Input(format!("noise must be positive, got {}", self.noise)));
        }
        Ok(())
    }

    /// Mean of class `y` at relative time `u`.
    pub fn class_mean(&self, u: f64, positive: bool) -> [f64; 2] {
        let sign = if positive { 1.0 } else { -1.0 };
        let r = self.radius;
        match self.kind {
            ShiftKind::ConceptShift => {
                let theta = std::f64::consts::TAU * u;
                [sign * r * theta.cos(), sign * r * theta.sin()]
            }
            ShiftKind::CovariateShift => [4.0 * u + sign * r, 0.0],
            ShiftKind::LabelShift | ShiftKind::NoShift => [sign * r, 0.0],
        }
    }

    pub fn positive_prior(&self, u: f64) -> f64 {
        match self.kind {
            ShiftKind::LabelShift => 0.2 + 0.6 * u,
            _ => 0.5,
        }
    }

    pub fn timestamp(&self, u: f64) -> f64 {
        SYNTH_EPOCH + (u * SYNTH_SPAN).floor()
    }

    /// Segment index of relative time `u`.
    pub fn segment_of(&self, u: f64) -> usize {
        ((u * self.segments as f64) as usize).min(self.segments - 1)
    }

    /// Timestamp at the middle of each segment.
    pub fn segment_midpoints(&self) -> Vec<f64> {
        (0..self.segments)
            .map(|s| self.timestamp((s as f64 + 0.5) / self.segments as f64))
            .collect()
    }

    /// Inverse of [`ShiftSpec::timestamp`] up to the one-second floor.
    pub fn relative_time(t: f64) -> f64 {
        (t - SYNTH_EPOCH) / SYNTH_SPAN
    }
}

/// Samples the dataset described by `spec`; a pure function of the spec.
pub fn generate(spec: &ShiftSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed, "generator");
    let n = spec.n;
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for i in 0..n {
        let u = i as f64 / n as f64;
        let positive = rng::unit(&mut r) < spec.positive_prior(u);
        let (e0, e1) = rng::normal_pair(&mut r);
        let mu = spec.class_mean(u, positive);
        x.push(mu[0] + spec.noise * e0);
        x.push(mu[1] + spec.noise * e1);
        y.push(if positive { 1.0 } else { 0.0 });
        t.push(spec.timestamp(u));
    }
    Dataset::new(
        Matrix::from_vec(n, 2, x)?,
        y,
        t,
        vec!["x0".into(), "x1".into()],
        Task::BinaryClassification,
    )
}
