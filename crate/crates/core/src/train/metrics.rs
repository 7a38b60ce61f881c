use crate::error::{Error, Result};

fn check_pair(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(op, a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::UndefinedMetric(format!("{op} of an empty set")));
    }
    Ok(())
}

/// Area under the ROC curve by the rank-sum statistic with midranks, so a
/// tied positive/negative pair counts one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair("auc", scores, labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("auc: NaN score".into()));
    }
    let mut positives = 0usize;
    for &y in labels {
        match y {
            1.0 => positives += 1,
            0.0 => {}
            other => return Err(Error::Input(format!("auc: label {other} is not 0 or 1"))),
        }
    }
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric("auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based midranks of the positives, doubled to stay integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u128;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1.0).count() as u128;
        twice_rank_sum += twice_mid * tied_pos;
        i = j + 1;
    }
    let (p, n) = (positives as u128, negatives as u128);
    // 2·U = 2·R₁ − p(p+1); exact in integers, one rounding in the division.
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair("rmse", pred, target)?;
    let sse: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Fraction of rows where `p ≥ 0.5` agrees with the label.
pub fn accuracy(probs: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair("accuracy", probs, labels)?;
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= 0.5) == (y == 1.0))
        .count();
    Ok(hits as f64 / probs.len() as f64)
}
