//! Time-conditioned feature-wise modulation
//!
//! ```text
//! x̃_i = γ_i(ψ(t)) · YJ(x_i; λ_i(ψ(t))) + β_i(ψ(t))
//! ```
//!
//! A [`Modulator`] maps `ψ(t)` through one ReLU hidden layer to a head of
//! width `3m`, read as `[γ_raw | β_raw | z_λ]`. The parameters are
//! `γ = 1 + γ_raw`, `β = β_raw`, `λ = 1 + 3·tanh(z_λ / 3)`. The head starts at
//! zero, so a fresh modulator is the exact identity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{relu_backward, relu_forward, Linear, Matrix, Parameter};
use crate::power::YeoJohnson;

/// Bound on `|λ − 1|`.
pub const LAMBDA_RAW_LIMIT: f64 = 3.0;
pub const DEFAULT_H_MOD: usize = 64;

/// Network stage where modulation is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Placement {
    Input,
    /// Linear output of hidden layer `i`, before its activation.
    Representation(usize),
    Output,
}

impl std::fmt::Display for Placement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Placement::Input => write!(f, "input"),
            Placement::Representation(i) => write!(f, "representation.{i}"),
            Placement::Output => write!(f, "output"),
        }
    }
}

/// Per-feature scale, shift and shape. Each matrix has either one row,
/// broadcast over the batch, or one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationParams {
    pub gamma: Matrix,
    pub beta: Matrix,
    pub lambda: Matrix,
}

impl ModulationParams {
    pub fn identity(rows: usize, width: usize) -> Self {
        Self {
            gamma: Matrix::filled(rows, width, 1.0),
            beta: Matrix::zeros(rows, width),
            lambda: Matrix::filled(rows, width, 1.0),
        }
    }

    /// A single shared parameter row.
    pub fn shared(gamma: &[f64], beta: &[f64], lambda: &[f64]) -> Result<Self> {
        if gamma.len() != beta.len() || gamma.len() != lambda.len() {
            return Err(Error::dim(
                "ModulationParams::shared",
                gamma.len(),
                format!("{}/{}", beta.len(), lambda.len()),
            ));
        }
        Ok(Self {
            gamma: Matrix::from_vec(1, gamma.len(), gamma.to_vec())?,
            beta: Matrix::from_vec(1, beta.len(), beta.to_vec())?,
            lambda: Matrix::from_vec(1, lambda.len(), lambda.to_vec())?,
        })
    }

    pub fn width(&self) -> usize {
        self.gamma.cols()
    }

    pub fn rows(&self) -> usize {
        self.gamma.rows()
    }
}

/// Gradients of the modulation op; parameter gradients have the same row
/// layout as the [`ModulationParams`] they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationGrads {
    pub x: Matrix,
    pub gamma: Matrix,
    pub beta: Matrix,
    pub lambda: Matrix,
}

/// Values saved by [`modulate`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ModulateCache {
    yj: Matrix,
    yj_dx: Matrix,
    yj_dlambda: Matrix,
    gamma: Matrix,
}

fn param_index(params_rows: usize, i: usize) -> usize {
    if params_rows == 1 {
        0
    } else {
        i
    }
}

pub fn modulate(x: &Matrix, params: &ModulationParams) -> Result<(Matrix, ModulateCache)> {
    let (rows, cols) = x.shape();
    if params.width() != cols {
        return Err(Error::dim(
            "modulate",
            format!("{cols} parameters per row"),
            params.width(),
        ));
    }
    if params.rows() != 1 && params.rows() != rows {
        return Err(Error::dim(
            "modulate",
            format!("1 or {rows} parameter rows"),
            params.rows(),
        ));
    }
    let yj = YeoJohnson::default();
    let n = x.len();
    let (mut out, mut v, mut dx, mut dl) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for i in 0..rows {
        let p = param_index(params.rows(), i);
        let (g, b, l) = (params.gamma.row(p), params.beta.row(p), params.lambda.row(p));
        for (j, &xv) in x.row(i).iter().enumerate() {
            let lam = l[j];
            let y = if lam == 1.0 { xv } else { yj.forward_unchecked(xv, lam) };
            out.push(g[j] * y + b[j]);
            v.push(y);
            dx.push(YeoJohnson::dx_unchecked(xv, lam));
            dl.push(YeoJohnson::dlambda_unchecked(xv, lam));
        }
    }
    let cache = ModulateCache {
        yj: Matrix::from_raw(rows, cols, v),
        yj_dx: Matrix::from_raw(rows, cols, dx),
        yj_dlambda: Matrix::from_raw(rows, cols, dl),
        gamma: params.gamma.clone(),
    };
    Ok((Matrix::from_raw(rows, cols, out), cache))
}

/// Gradients of `modulate` given `∂L/∂x̃`. Shared (one-row) parameters
/// receive the sum over the batch.
pub fn modulate_backward(cache: &ModulateCache, upstream: &Matrix) -> Result<ModulationGrads> {
    if upstream.shape() != cache.yj.shape() {
        return Err(Error::dim(
            "modulate_backward",
            format!("{:?}", cache.yj.shape()),
            format!("{:?}", upstream.shape()),
        ));
    }
    let (rows, cols) = upstream.shape();
    let prow = cache.gamma.rows();
    let mut gx = Matrix::zeros(rows, cols);
    let mut gg = Matrix::zeros(prow, cols);
    let mut gb = Matrix::zeros(prow, cols);
    let mut gl = Matrix::zeros(prow, cols);
    for i in 0..rows {
        let p = param_index(prow, i);
        let gamma = cache.gamma.row(p);
        let up = upstream.row(i);
        let (yv, ydx, ydl) = (cache.yj.row(i), cache.yj_dx.row(i), cache.yj_dlambda.row(i));
        let gxi = gx.row_mut(i);
        for j in 0..cols {
            gxi[j] = up[j] * gamma[j] * ydx[j];
        }
        let ggp = gg.row_mut(p);
        for j in 0..cols {
            ggp[j] += up[j] * yv[j];
        }
        let gbp = gb.row_mut(p);
        for j in 0..cols {
            gbp[j] += up[j];
        }
        let glp = gl.row_mut(p);
        for j in 0..cols {
            glp[j] += up[j] * gamma[j] * ydl[j];
        }
    }
    Ok(ModulationGrads {
        x: gx,
        gamma: gg,
        beta: gb,
        lambda: gl,
    })
}

/// Two-layer network `ψ → (γ, β, λ)` for a modulated tensor of width `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulator {
    pub hidden: Linear,
    pub head: Linear,
}

/// Activations saved by [`Modulator::forward`].
#[derive(Debug, Clone)]
pub struct ModulatorCache {
    psi: Matrix,
    hidden_pre: Matrix,
    hidden_act: Matrix,
    lambda_pre: Matrix,
}

impl Modulator {
    /// Random hidden layer, zero head: identity modulation at init.
    pub fn new<R: Rng + ?Sized>(d_embedding: usize, h_mod: usize, width: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::init_uniform(d_embedding, h_mod, rng),
            head: Linear::zeros(h_mod, 3 * width),
        }
    }

    pub fn from_layers(hidden: Linear, head: Linear) -> Result<Self> {
        if head.input_dim() != hidden.output_dim() || head.output_dim() % 3 != 0 {
            return Err(Error::dim(
                "Modulator::from_layers",
                format!("head {}x(3m)", hidden.output_dim()),
                format!("{}x{}", head.input_dim(), head.output_dim()),
            ));
        }
        Ok(Self { hidden, head })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn width(&self) -> usize {
        self.head.output_dim() / 3
    }

    pub fn num_params(&self) -> usize {
        self.hidden.num_params() + self.head.num_params()
    }

    pub fn forward(&self, psi: &Matrix) -> Result<(ModulationParams, ModulatorCache)> {
        if psi.cols() != self.input_dim() {
            return Err(Error::dim("Modulator::forward", self.input_dim(), psi.cols()));
        }
        let hidden_pre = self.hidden.forward(psi)?;
        let hidden_act = relu_forward(&hidden_pre);
        let raw = self.head.forward(&hidden_act)?;
        let m = self.width();
        let rows = psi.rows();
        let mut gamma = Vec::with_capacity(rows * m);
        let mut beta = Vec::with_capacity(rows * m);
        let mut lambda = Vec::with_capacity(rows * m);
        let mut lambda_pre = Vec::with_capacity(rows * m);
        for i in 0..rows {
            let r = raw.row(i);
            gamma.extend(r[..m].iter().map(|v| 1.0 + v));
            beta.extend_from_slice(&r[m..2 * m]);
            for &z in &r[2 * m..] {
                lambda.push(1.0 + LAMBDA_RAW_LIMIT * (z / LAMBDA_RAW_LIMIT).tanh());
                lambda_pre.push(z);
            }
        }
        let params = ModulationParams {
            gamma: Matrix::from_raw(rows, m, gamma),
            beta: Matrix::from_raw(rows, m, beta),
            lambda: Matrix::from_raw(rows, m, lambda),
        };
        let cache = ModulatorCache {
            psi: psi.clone(),
            hidden_pre,
            hidden_act,
            lambda_pre: Matrix::from_raw(rows, m, lambda_pre),
        };
        Ok((params, cache))
    }

    /// Accumulates modulator gradients and returns `∂L/∂ψ`.
    pub fn backward(&mut self, cache: &ModulatorCache, grads: &ModulationGrads) -> Result<Matrix> {
        let m = self.width();
        let rows = cache.psi.rows();
        if grads.gamma.shape() != (rows, m) {
            return Err(Error::dim(
                "Modulator::backward",
                format!("{rows}x{m}"),
                format!("{:?}", grads.gamma.shape()),
            ));
        }
        let mut head_grad = Vec::with_capacity(rows * 3 * m);
        for i in 0..rows {
            head_grad.extend_from_slice(grads.gamma.row(i));
            head_grad.extend_from_slice(grads.beta.row(i));
            for (&g, &z) in grads.lambda.row(i).iter().zip(cache.lambda_pre.row(i)) {
                let th = (z / LAMBDA_RAW_LIMIT).tanh();
                head_grad.push(g * (1.0 - th * th));
            }
        }
        let head_grad = Matrix::from_raw(rows, 3 * m, head_grad);
        let g_act = self.head.backward(&cache.hidden_act, &head_grad)?;
        let g_pre = relu_backward(&cache.hidden_pre, &g_act)?;
        self.hidden.backward(&cache.psi, &g_pre)
    }

    pub fn zero_grad(&mut self) {
        self.hidden.zero_grad();
        self.head.zero_grad();
    }

    pub fn params(&self) -> [&Parameter; 4] {
        let [a, b] = self.hidden.params();
        let [c, d] = self.head.params();
        [a, b, c, d]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 4] {
        let [a, b] = self.hidden.params_mut();
        let [c, d] = self.head.params_mut();
        [a, b, c, d]
    }
}
