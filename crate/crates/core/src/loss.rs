//! Training losses, the ordinal label codec, and score decoding.
//!
//! Grading tasks treat the class index as an ordinal grade: grade `g` out of
//! `c` becomes a length `c-1` cumulative binary target (`g` leading ones),
//! trained with per-component binary cross-entropy. Plain classification
//! uses cross-entropy over `c` scores. Both losses take raw scores and apply
//! their own sigmoid/softmax internally in log-space, which keeps gradients
//! finite however saturated the scores get.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::sigmoid;

/// Which loss the model is trained with. This also fixes the model's output
/// width: `c` scores for cross-entropy, `c-1` for the ordinal encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    BceOrdinal,
}

impl LossKind {
    /// Number of raw scores the model must emit for `num_classes` classes.
    pub fn output_dim(&self, num_classes: usize) -> usize {
        match self {
            LossKind::CrossEntropy => num_classes,
            LossKind::BceOrdinal => num_classes.saturating_sub(1).max(1),
        }
    }
}

/// Cumulative binary encoding of grade `g`: positions `0..g` are 1, the rest
/// 0, in a vector of length `num_classes - 1`.
pub fn ordinal_encode(grade: usize, num_classes: usize) -> Result<Vec<f64>> {
    if num_classes < 2 {
        return Err(Error::parameter("ordinal encoding needs at least 2 classes"));
    }
    if grade >= num_classes {
        return Err(Error::parameter(format!(
            "grade {grade} outside [0, {num_classes})"
        )));
    }
    Ok((0..num_classes - 1)
        .map(|i| if i < grade { 1.0 } else { 0.0 })
        .collect())
}

/// Inverse of [`ordinal_encode`] on probabilities: the decoded grade is the
/// number of entries above 0.5.
pub fn ordinal_decode(probabilities: &[f64]) -> usize {
    probabilities.iter().filter(|&&p| p > 0.5).count()
}

/// Mean binary cross-entropy over components, computed in logit form.
///
/// Per component the loss is `max(z, 0) - z*t + ln(1 + exp(-|z|))`, which is
/// algebraically `-[t ln s(z) + (1-t) ln(1-s(z))]` but never overflows. The
/// gradient with respect to the scores is `(s(z) - t) / len`.
pub fn bce_multilabel_loss(scores: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != targets.len() {
        return Err(Error::dimension(
            "bce_multilabel_loss",
            format!("{} targets", scores.len()),
            format!("{} targets", targets.len()),
        ));
    }
    if scores.is_empty() {
        return Err(Error::parameter("bce on empty score vector"));
    }
    if scores.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite input to bce_multilabel_loss"));
    }
    let inv_len = 1.0 / scores.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(scores.len());
    for (&z, &t) in scores.iter().zip(targets.iter()) {
        loss += z.max(0.0) - z * t + math::ln_1p(math::exp(-z.abs()));
        grad.push((sigmoid(z) - t) * inv_len);
    }
    Ok((loss * inv_len, grad))
}

/// Cross-entropy of the softmax over `scores` against the target class.
/// Gradient is `softmax(scores) - onehot(target)`.
pub fn ce_loss(scores: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if scores.is_empty() {
        return Err(Error::parameter("cross-entropy on empty score vector"));
    }
    if target >= scores.len() {
        return Err(Error::parameter(format!(
            "target class {target} outside [0, {})",
            scores.len()
        )));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite input to ce_loss"));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = scores.iter().map(|&z| math::exp(z - max)).sum();
    let lse = max + math::ln(sum_exp);
    let loss = lse - scores[target];
    let mut grad: Vec<f64> = scores.iter().map(|&z| math::exp(z - max) / sum_exp).collect();
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// Loss and score gradient for one bag under the configured loss kind.
pub fn loss_and_grad(
    scores: &[f64],
    label: usize,
    kind: LossKind,
    num_classes: usize,
) -> Result<(f64, Vec<f64>)> {
    match kind {
        LossKind::CrossEntropy => {
            if label >= num_classes {
                return Err(Error::parameter(format!(
                    "label {label} outside [0, {num_classes})"
                )));
            }
            ce_loss(scores, label)
        }
        LossKind::BceOrdinal => {
            let targets = ordinal_encode(label, num_classes)?;
            bce_multilabel_loss(scores, &targets)
        }
    }
}

/// Decodes raw scores into a class index: argmax for cross-entropy (lowest
/// index wins ties), cumulative sigmoid count for the ordinal encoding.
pub fn predict_label(scores: &[f64], kind: LossKind) -> usize {
    match kind {
        LossKind::CrossEntropy => {
            let mut best = 0;
            for (i, &z) in scores.iter().enumerate() {
                if z > scores[best] {
                    best = i;
                }
            }
            best
        }
        LossKind::BceOrdinal => scores.iter().filter(|&&z| sigmoid(z) > 0.5).count(),
    }
}
