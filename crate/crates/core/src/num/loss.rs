//! Softmax, label smoothing and smoothed cross-entropy as plain functions.
//!
//! These mirror the tape's fused cross-entropy op and exist so the formulas
//! can be evaluated (and tested) without building a graph.

use super::NumError;

/// Stable softmax of a vector. Shift-invariant; outputs sum to 1.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - m).exp()).collect();
    let denom: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / denom).collect()
}

/// `y_ls = y·(1−α) + α/C`. The smoothed components still sum to 1.
pub fn smooth_labels(y: &[f64], alpha: f64, classes: usize) -> Result<Vec<f64>, NumError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(NumError::BadAlpha(alpha));
    }
    if classes != y.len() {
        return Err(NumError::ShapeMismatch(format!(
            "{} classes but {} target entries",
            classes,
            y.len()
        )));
    }
    Ok(y.iter()
        .map(|&v| v * (1.0 - alpha) + alpha / classes as f64)
        .collect())
}

/// One-hot vector of length `classes` with 1 at `index`.
pub fn one_hot(index: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[index] = 1.0;
    v
}

/// `CE(x, y_ls) = −Σ_i y_i_ls · log softmax(x)_i`, computed via logsumexp.
pub fn cross_entropy_smoothed(logits: &[f64], target: &[f64]) -> Result<f64, NumError> {
    if logits.len() != target.len() {
        return Err(NumError::ShapeMismatch(format!(
            "{} logits vs {} targets",
            logits.len(),
            target.len()
        )));
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    Ok(target
        .iter()
        .zip(logits)
        .filter(|(&t, _)| t != 0.0)
        .map(|(&t, &x)| t * (lse - x))
        .sum())
}

/// Batch loss: the sum of per-sample smoothed cross-entropies.
pub fn cross_entropy_batch(rows: &[(&[f64], &[f64])]) -> Result<f64, NumError> {
    rows.iter()
        .map(|(logits, target)| cross_entropy_smoothed(logits, target))
        .sum()
}
