use super::Matrix;
use crate::error::{Error, Result};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(a))` without overflow.
fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

fn check_len(op: &'static str, pred: &Matrix, target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::dim(op, pred.len(), target.len()));
    }
    if target.is_empty() {
        return Err(Error::Input(format!("{op}: empty batch")));
    }
    Ok(())
}

/// Mean binary cross-entropy on logits. Returns the loss and its gradient
/// with respect to the logits.
pub fn bce_with_logits(logits: &Matrix, labels: &[f64]) -> Result<(f64, Matrix)> {
    check_len("bce_with_logits", logits, labels)?;
    if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Input(format!("label {bad} is not binary")));
    }
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(labels.len());
    for (&z, &y) in logits.as_slice().iter().zip(labels) {
        let sign = 2.0 * y - 1.0;
        loss += softplus(-sign * z);
        grad.push((sigmoid(z) - y) / n);
    }
    Ok((loss / n, Matrix::from_raw(logits.rows(), logits.cols(), grad)))
}

/// Mean squared error and its gradient with respect to the predictions.
pub fn mse_loss(pred: &Matrix, target: &[f64]) -> Result<(f64, Matrix)> {
    check_len("mse_loss", pred, target)?;
    let n = target.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(target.len());
    for (&p, &t) in pred.as_slice().iter().zip(target) {
        let d = p - t;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    Ok((loss / n, Matrix::from_raw(pred.rows(), pred.cols(), grad)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::column_vector(v).unwrap()
    }

    #[test]
    fn bce_at_zero_logit() {
        let (loss, grad) = bce_with_logits(&col(&[0.0]), &[1.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(grad.as_slice(), &[-0.5]);
    }

    #[test]
    fn bce_saturates_without_overflow() {
        let (loss, grad) = bce_with_logits(&col(&[50.0]), &[1.0]).unwrap();
        assert!(loss >= 0.0 && loss < 1e-20);
        assert!(grad.as_slice()[0].abs() < 1e-20);
        let (loss, _) = bce_with_logits(&col(&[-800.0]), &[1.0]).unwrap();
        assert!((loss - 800.0).abs() < 1e-9);
    }

    #[test]
    fn bce_rejects_non_binary_labels() {
        assert!(matches!(bce_with_logits(&col(&[0.0]), &[0.5]), Err(Error::Input(_))));
    }

    #[test]
    fn bce_grad_matches_central_differences() {
        let z = [0.7, -1.3];
        let y = [1.0, 0.0];
        let (_, grad) = bce_with_logits(&col(&z), &y).unwrap();
        let h = 1e-5;
        for k in 0..2 {
            let mut up = z;
            up[k] += h;
            let mut down = z;
            down[k] -= h;
            let numeric =
                (bce_with_logits(&col(&up), &y).unwrap().0 - bce_with_logits(&col(&down), &y).unwrap().0) / (2.0 * h);
            let a = grad.as_slice()[k];
            assert!((a - numeric).abs() / (a.abs() + numeric.abs()) < 1e-8);
        }
    }

    #[test]
    fn mse_examples() {
        let (loss, grad) = mse_loss(&col(&[1.0, -2.0]), &[1.0, -2.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));

        let (loss, grad) = mse_loss(&col(&[2.0]), &[0.0]).unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(grad.as_slice(), &[4.0]);

        assert!(mse_loss(&col(&[1.0, 2.0]), &[1.0]).is_err());
    }

    #[test]
    fn mse_grad_matches_central_differences() {
        let p = [0.3, -1.1, 2.4];
        let t = [0.0, 0.5, 1.0];
        let (_, grad) = mse_loss(&col(&p), &t).unwrap();
        let h = 1e-5;
        for k in 0..3 {
            let mut up = p;
            up[k] += h;
            let mut down = p;
            down[k] -= h;
            let numeric = (mse_loss(&col(&up), &t).unwrap().0 - mse_loss(&col(&down), &t).unwrap().0) / (2.0 * h);
            let a = grad.as_slice()[k];
            assert!((a - numeric).abs() / (a.abs() + numeric.abs()) < 1e-8);
        }
    }
}
