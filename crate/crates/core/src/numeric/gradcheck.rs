/// Outcome of comparing an analytic gradient to central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub numeric: Vec<f64>,
    pub max_rel_err: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Central-difference gradient check at `theta`.
///
/// Relative error per coordinate is `|a − n| / max(1e-12, |a| + |n|)`.
pub fn finite_diff_check<F>(mut loss: F, theta: &[f64], analytic: &[f64], h: f64, tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(theta.len(), analytic.len(), "gradient length");
    let mut probe = theta.to_vec();
    let mut numeric = Vec::with_capacity(theta.len());
    let mut max_rel_err = 0.0;
    let mut worst_index = 0;
    for k in 0..theta.len() {
        probe[k] = theta[k] + h;
        let up = loss(&probe);
        probe[k] = theta[k] - h;
        let down = loss(&probe);
        probe[k] = theta[k];
        let g = (up - down) / (2.0 * h);
        let rel = (analytic[k] - g).abs() / (analytic[k].abs() + g.abs()).max(1e-12);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_index = k;
        }
        numeric.push(g);
    }
    GradCheckReport {
        numeric,
        max_rel_err,
        worst_index,
        tolerance,
        passed: max_rel_err < tolerance,
    }
}
