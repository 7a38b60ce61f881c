//! Yeo-Johnson power transform with derivatives in `x` and `λ`.
//!
//! ```text
//! YJ(x; λ) =  ((1 + x)^λ − 1) / λ              x ≥ 0
//!          = −((1 − x)^(2−λ) − 1) / (2 − λ)    x < 0
//! ```
//!
//! Both branches are evaluated as `expm1(a·u)/a` with `u = log1p(|x|)`, which
//! stays accurate as `a → 0`. When `|λ| < eps` (positive side) or
//! `|2 − λ| < eps` (negative side) the removable singularity is filled with a
//! second-order series. The `λ` derivative is `u²·g(a·u)` with
//! `g(s) = (eˢ(s − 1) + 1)/s²`, evaluated by its Taylor series for small `|s|`
//! where the closed form cancels catastrophically.

use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const DEFAULT_EPS: f64 = 1e-6;

/// Below this `|s|` the series for `g(s)` is used.
const G_SERIES_CUTOFF: f64 = 0.5;

/// Yeo-Johnson evaluator with a configurable singularity threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YeoJohnson {
    eps: f64,
}

impl Default for YeoJohnson {
    fn default() -> Self {
        Self { eps: DEFAULT_EPS }
    }
}

/// Values and partial derivatives of a batch transform.
#[derive(Debug, Clone, PartialEq)]
pub struct YjBatch {
    pub values: Matrix,
    pub dx: Matrix,
    pub dlambda: Matrix,
}

fn check_finite(x: f64, lambda: f64) -> Result<()> {
    if !x.is_finite() || !lambda.is_finite() {
        return Err(Error::Input(format!(
            "Yeo-Johnson needs finite inputs, got x={x}, lambda={lambda}"
        )));
    }
    Ok(())
}

/// `(eˢ(s − 1) + 1) / s²`, the shape of `∂λ YJ / u²`.
fn g(s: f64) -> f64 {
    if s.abs() < G_SERIES_CUTOFF {
        // Σ_{n≥2} (n−1)/n! · s^(n−2), truncated where terms fall below 1e-17.
        let mut term = 0.5; // (n−1)/n! at n = 2
        let mut sum = 0.5;
        let mut power = 1.0;
        for n in 3..=18u32 {
            let nf = f64::from(n);
            term *= (nf - 1.0) / ((nf - 2.0) * nf);
            power *= s;
            sum += term * power;
        }
        sum
    } else {
        (s.exp() * (s - 1.0) + 1.0) / (s * s)
    }
}

impl YeoJohnson {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Input(format!("eps must be positive, got {eps}")));
        }
        Ok(Self { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn forward(&self, x: f64, lambda: f64) -> Result<f64> {
        check_finite(x, lambda)?;
        Ok(self.forward_unchecked(x, lambda))
    }

    pub fn dx(&self, x: f64, lambda: f64) -> Result<f64> {
        check_finite(x, lambda)?;
        Ok(Self::dx_unchecked(x, lambda))
    }

    pub fn dlambda(&self, x: f64, lambda: f64) -> Result<f64> {
        check_finite(x, lambda)?;
        Ok(Self::dlambda_unchecked(x, lambda))
    }

    pub(crate) fn forward_unchecked(&self, x: f64, lambda: f64) -> f64 {
        if x >= 0.0 {
            let u = x.ln_1p();
            if lambda.abs() < self.eps {
                u * (1.0 + lambda * u / 2.0 + lambda * lambda * u * u / 6.0)
            } else {
                (lambda * u).exp_m1() / lambda
            }
        } else {
            let v = (-x).ln_1p();
            let mu = 2.0 - lambda;
            if mu.abs() < self.eps {
                -v * (1.0 + mu * v / 2.0 + mu * mu * v * v / 6.0)
            } else {
                -(mu * v).exp_m1() / mu
            }
        }
    }

    pub(crate) fn dx_unchecked(x: f64, lambda: f64) -> f64 {
        if x >= 0.0 {
            ((lambda - 1.0) * x.ln_1p()).exp()
        } else {
            ((1.0 - lambda) * (-x).ln_1p()).exp()
        }
    }

    pub(crate) fn dlambda_unchecked(x: f64, lambda: f64) -> f64 {
        if x >= 0.0 {
            let u = x.ln_1p();
            u * u * g(lambda * u)
        } else {
            // ∂λ = −∂μ with μ = 2 − λ, and ∂μ[−expm1(μv)/μ] = −v²·g(μv).
            let v = (-x).ln_1p();
            v * v * g((2.0 - lambda) * v)
        }
    }

    /// Applies the transform to every entry of `x`, with `lambdas[j]` used for
    /// column `j`.
    pub fn batch(&self, x: &Matrix, lambdas: &[f64]) -> Result<YjBatch> {
        if lambdas.len() != x.cols() {
            return Err(Error::dim("yj_batch", x.cols(), lambdas.len()));
        }
        if let Some(l) = lambdas.iter().find(|l| !l.is_finite()) {
            return Err(Error::Input(format!("non-finite lambda {l}")));
        }
        let n = x.len();
        let (mut values, mut dx, mut dl) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..x.rows() {
            for (&xv, &l) in x.row(i).iter().zip(lambdas) {
                if !xv.is_finite() {
                    return Err(Error::Input(format!("non-finite x {xv} in row {i}")));
                }
                values.push(self.forward_unchecked(xv, l));
                dx.push(Self::dx_unchecked(xv, l));
                dl.push(Self::dlambda_unchecked(xv, l));
            }
        }
        let (r, c) = x.shape();
        Ok(YjBatch {
            values: Matrix::from_raw(r, c, values),
            dx: Matrix::from_raw(r, c, dx),
            dlambda: Matrix::from_raw(r, c, dl),
        })
    }
}

/// Yeo-Johnson transform with the default threshold.
pub fn yj_forward(x: f64, lambda: f64) -> Result<f64> {
    YeoJohnson::default().forward(x, lambda)
}

pub fn yj_dx(x: f64, lambda: f64) -> Result<f64> {
    YeoJohnson::default().dx(x, lambda)
}

pub fn yj_dlambda(x: f64, lambda: f64) -> Result<f64> {
    YeoJohnson::default().dlambda(x, lambda)
}

pub fn yj_batch(x: &Matrix, lambdas: &[f64]) -> Result<YjBatch> {
    YeoJohnson::default().batch(x, lambdas)
}
