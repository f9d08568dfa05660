//! Losses with their gradients.

use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Two-sided binary cross-entropy `-(y ln p + (1-y) ln(1-p))`.
/// Returns the loss and its derivative with respect to `p`.
pub fn bce_loss(p: f64, y: f64) -> (f64, f64) {
    let pc = p.clamp(EPS, 1.0 - EPS);
    let loss = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    let grad = -y / pc + (1.0 - y) / (1.0 - pc);
    (loss, grad)
}

/// BCE on a sigmoid output, differentiated with respect to the logit.
pub fn bce_with_logit(logit: f64, y: f64) -> (f64, f64, f64) {
    let p = sigmoid(logit);
    let (loss, dp) = bce_loss(p, y);
    (loss, dp * p * (1.0 - p), p)
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    pub probs: Vec<f64>,
    /// Derivative of the loss with respect to each logit.
    pub grad: Vec<f64>,
}

/// `-ln softmax(logits)[target]`.
pub fn softmax_ce(logits: &[f64], target: usize) -> Result<CrossEntropy> {
    if logits.len() < 2 || target >= logits.len() {
        return Err(Error::ClassOutOfRange {
            index: target,
            classes: logits.len(),
        });
    }
    let probs = softmax(logits);
    let loss = -probs[target].max(f64::MIN_POSITIVE).ln();
    let mut grad = probs.clone();
    grad[target] -= 1.0;
    Ok(CrossEntropy { loss, probs, grad })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_confident_correct_is_near_zero() {
        let (loss, _) = bce_loss(1.0 - 1e-12, 1.0);
        assert!(loss < 1e-6);
    }

    #[test]
    fn bce_at_half_is_ln2_both_sides() {
        let (l1, _) = bce_loss(0.5, 1.0);
        let (l0, _) = bce_loss(0.5, 0.0);
        assert!((l1 - std::f64::consts::LN_2).abs() < 1e-6);
        assert!((l1 - 0.693147).abs() < 1e-6);
        assert_eq!(l1, l0);
    }

    #[test]
    fn uniform_logits_cost_ln_k() {
        let ce = softmax_ce(&[0.0, 0.0, 0.0], 1).unwrap();
        assert!((ce.loss - 3f64.ln()).abs() < 1e-12);
        assert!((ce.loss - 1.098612).abs() < 1e-6);
        assert!(ce.probs.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax_ce(&[0.3, -1.2, 2.0], 2).unwrap();
        let b = softmax_ce(&[100.3, 98.8, 102.0], 2).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-9);
        for (p, q) in a.probs.iter().zip(&b.probs) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn two_class_reference_value() {
        // -ln(e^2 / (e^2 + 1))
        let expected = -(2f64.exp() / (2f64.exp() + 1.0)).ln();
        let ce = softmax_ce(&[2.0, 0.0], 0).unwrap();
        assert!((ce.loss - expected).abs() < 1e-12);
        assert!((ce.loss - 0.126928).abs() < 1e-6);
    }

    #[test]
    fn target_out_of_range_errors() {
        assert!(softmax_ce(&[0.0, 1.0], 2).is_err());
        assert!(softmax_ce(&[0.0], 0).is_err());
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
