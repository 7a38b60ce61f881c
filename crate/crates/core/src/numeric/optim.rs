use serde::{Deserialize, Serialize};

use super::{Matrix, Parameter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) {
            return Err(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: Matrix,
    pub v: Matrix,
    pub step: u64,
}

impl AdamWState {
    pub fn new(param: &Parameter) -> Self {
        let (r, c) = param.value.shape();
        Self {
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
            step: 0,
        }
    }
}

/// One AdamW update. Weight decay is decoupled: `θ ← θ − lr·wd·θ` is applied
/// to the parameter before, and independently of, the adaptive step.
pub fn adamw_step(param: &mut Parameter, state: &mut AdamWState, config: &AdamWConfig) {
    assert_eq!(param.value.shape(), state.m.shape(), "AdamW state shape");
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    let decay = config.lr * config.weight_decay;

    let theta = param.value.as_mut_slice();
    let grad = param.grad.as_slice();
    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for k in 0..theta.len() {
        let g = grad[k];
        m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g;
        v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
        let m_hat = m[k] / bc1;
        let v_hat = v[k] / bc2;
        if decay != 0.0 {
            theta[k] -= decay * theta[k];
        }
        theta[k] -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(value: f64, grad: f64) -> Parameter {
        let mut p = Parameter::new(Matrix::from_vec(1, 1, vec![value]).unwrap());
        p.grad.as_mut_slice()[0] = grad;
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(1.0, 1.0);
        let mut s = AdamWState::new(&p);
        let cfg = AdamWConfig {
            lr: 0.1,
            ..Default::default()
        };
        adamw_step(&mut p, &mut s, &cfg);
        assert!((p.value.as_slice()[0] - 0.9).abs() <= 1e-9);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn decay_is_decoupled() {
        let mut p = scalar(1.0, 1.0);
        let mut s = AdamWState::new(&p);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.01,
            ..Default::default()
        };
        adamw_step(&mut p, &mut s, &cfg);
        assert!((p.value.as_slice()[0] - 0.899).abs() <= 1e-9);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = scalar(0.37, 0.0);
        let mut s = AdamWState::new(&p);
        let cfg = AdamWConfig::default();
        for _ in 0..5 {
            adamw_step(&mut p, &mut s, &cfg);
        }
        assert_eq!(p.value.as_slice()[0], 0.37);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        assert!(AdamWConfig::default().validate().is_ok());
        assert!(AdamWConfig {
            lr: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdamWConfig {
            beta1: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdamWConfig {
            weight_decay: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
