use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gemm, Matrix, View};
use crate::error::{Error, Result};
use crate::rng;

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Affine map `y = W x + b` with `W` stored as (out x in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Parameter::new(Matrix::zeros(output, input)),
            bias: Parameter::new(Matrix::zeros(output, 1)),
        }
    }

    /// Uniform init in `±1/sqrt(input)` for weight and bias.
    pub fn init_uniform<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = if input == 0 { 0.0 } else { 1.0 / (input as f64).sqrt() };
        let mut layer = Self::zeros(input, output);
        for w in layer.weight.value.as_mut_slice() {
            *w = rng::symmetric(rng, bound);
        }
        for b in layer.bias.value.as_mut_slice() {
            *b = rng::symmetric(rng, bound);
        }
        layer
    }

    pub fn from_parts(weight: Matrix, bias: &[f64]) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::dim("Linear::from_parts", weight.rows(), bias.len()));
        }
        Ok(Self {
            weight: Parameter::new(weight),
            bias: Parameter::new(Matrix::column_vector(bias)?),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }

    fn check_input(&self, op: &'static str, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim(op, format!("{} input columns", self.input_dim()), x.cols()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input("Linear::forward", x)?;
        let (in_dim, out_dim, batch) = (self.input_dim(), self.output_dim(), x.rows());
        let b = self.bias.value.as_slice();
        let mut out = Vec::with_capacity(batch * out_dim);
        for _ in 0..batch {
            out.extend_from_slice(b);
        }
        gemm(
            batch,
            in_dim,
            out_dim,
            View::rows(x.as_slice(), in_dim),
            View::transposed(self.weight.value.as_slice(), in_dim),
            1.0,
            &mut out,
        );
        Ok(Matrix::from_raw(batch, out_dim, out))
    }

    fn check_backward(&self, x: &Matrix, upstream: &Matrix) -> Result<()> {
        self.check_input("Linear::backward", x)?;
        if upstream.shape() != (x.rows(), self.output_dim()) {
            return Err(Error::dim(
                "Linear::backward",
                format!("upstream {}x{}", x.rows(), self.output_dim()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        Ok(())
    }

    /// Batch contributions are summed into scratch buffers first and then
    /// added, so repeated calls accumulate exactly as the sum of single calls.
    fn accumulate_param_grads(&mut self, x: &Matrix, upstream: &Matrix) {
        let (in_dim, out_dim, batch) = (self.input_dim(), self.output_dim(), x.rows());
        let mut gw = vec![0.0; out_dim * in_dim];
        gemm(
            out_dim,
            batch,
            in_dim,
            View::transposed(upstream.as_slice(), out_dim),
            View::rows(x.as_slice(), in_dim),
            0.0,
            &mut gw,
        );
        let mut gb = vec![0.0; out_dim];
        for i in 0..batch {
            for (g, u) in gb.iter_mut().zip(upstream.row(i)) {
                *g += u;
            }
        }
        for (g, d) in self.weight.grad.as_mut_slice().iter_mut().zip(gw) {
            *g += d;
        }
        for (g, d) in self.bias.grad.as_mut_slice().iter_mut().zip(gb) {
            *g += d;
        }
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. `x`.
    pub fn backward(&mut self, x: &Matrix, upstream: &Matrix) -> Result<Matrix> {
        self.check_backward(x, upstream)?;
        self.accumulate_param_grads(x, upstream);
        let (in_dim, out_dim, batch) = (self.input_dim(), self.output_dim(), x.rows());
        let mut gx = vec![0.0; batch * in_dim];
        gemm(
            batch,
            out_dim,
            in_dim,
            View::rows(upstream.as_slice(), out_dim),
            View::rows(self.weight.value.as_slice(), in_dim),
            0.0,
            &mut gx,
        );
        Ok(Matrix::from_raw(batch, in_dim, gx))
    }

    /// Accumulates parameter gradients only, for inputs that are constants.
    pub fn backward_params(&mut self, x: &Matrix, upstream: &Matrix) -> Result<()> {
        self.check_backward(x, upstream)?;
        self.accumulate_param_grads(x, upstream);
        Ok(())
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }
}

pub fn relu_forward(x: &Matrix) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gate is `x > 0`; the subgradient at exactly 0 is 0.
pub fn relu_backward(x: &Matrix, upstream: &Matrix) -> Result<Matrix> {
    if x.shape() != upstream.shape() {
        return Err(Error::dim(
            "relu_backward",
            format!("{:?}", x.shape()),
            format!("{:?}", upstream.shape()),
        ));
    }
    let data = x
        .as_slice()
        .iter()
        .zip(upstream.as_slice())
        .map(|(&xv, &g)| if xv > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Matrix::from_raw(x.rows(), x.cols(), data))
}
