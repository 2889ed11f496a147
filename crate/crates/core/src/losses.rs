//! Per-sample losses and their gradients with respect to the logits.
//!
//! Bootstrap targets and noise weights are constants under differentiation:
//! every gradient here is `softmax(logits) - target` for the effective target.

use serde::{Deserialize, Serialize};

use crate::metrics::argmax;

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad_logits: Vec<f64>,
}

impl LossOutput {
    /// `a * self + b * other`, for value and gradient alike.
    fn combine(self, a: f64, other: LossOutput, b: f64) -> LossOutput {
        let grad_logits = self
            .grad_logits
            .iter()
            .zip(&other.grad_logits)
            .map(|(x, y)| a * x + b * y)
            .collect();
        LossOutput {
            value: a * self.value + b * other.value,
            grad_logits,
        }
    }
}

/// Which prediction the bootstrap target mixes in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bootstrap {
    /// One-hot of the predicted class.
    #[default]
    Hard,
    /// The softmax output itself.
    Soft,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Cross-entropy against an arbitrary target vector.
fn target_ce(logits: &[f64], target: &[f64]) -> LossOutput {
    let log_h = log_softmax(logits);
    let value = -target.iter().zip(&log_h).map(|(t, l)| t * l).sum::<f64>();
    let grad_logits = log_h.iter().zip(target).map(|(l, t)| l.exp() - t).collect();
    LossOutput {
        value: value.max(0.0),
        grad_logits,
    }
}

fn one_hot(k: usize, class: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[class] = 1.0;
    v
}

pub fn ce_loss(logits: &[f64], label: usize) -> LossOutput {
    target_ce(logits, &one_hot(logits.len(), label))
}

fn bootstrap_prediction(logits: &[f64], mode: Bootstrap) -> Vec<f64> {
    let h = softmax(logits);
    match mode {
        Bootstrap::Hard => one_hot(logits.len(), argmax(&h)),
        Bootstrap::Soft => h,
    }
}

fn bootstrap_target(label: usize, w: f64, z: &[f64]) -> Vec<f64> {
    z.iter()
        .enumerate()
        .map(|(k, &zk)| {
            let y = if k == label { 1.0 } else { 0.0 };
            (1.0 - w) * y + w * zk
        })
        .collect()
}

/// Static hard bootstrapping loss: cross-entropy against
/// `(1 - w) onehot(label) + w onehot(argmax h)`.
pub fn bs_loss(logits: &[f64], label: usize, w: f64) -> LossOutput {
    bs_loss_with(logits, label, w, Bootstrap::Hard)
}

pub fn bs_loss_with(logits: &[f64], label: usize, w: f64, mode: Bootstrap) -> LossOutput {
    let z = bootstrap_prediction(logits, mode);
    target_ce(logits, &bootstrap_target(label, w, &z))
}

/// Mixup cross-entropy for logits computed on `gamma x_i + (1 - gamma) x_j`.
pub fn mixup_ce_loss(logits: &[f64], label_i: usize, label_j: usize, gamma: f64) -> LossOutput {
    ce_loss(logits, label_i).combine(gamma, ce_loss(logits, label_j), 1.0 - gamma)
}

/// Bootstrapping loss under Mixup. Both terms share the single prediction
/// made on the mixed input.
pub fn bsm_loss(
    logits: &[f64],
    label_i: usize,
    label_j: usize,
    gamma: f64,
    w_i: f64,
    w_j: f64,
) -> LossOutput {
    bsm_loss_with(logits, label_i, label_j, gamma, w_i, w_j, Bootstrap::Hard)
}

pub fn bsm_loss_with(
    logits: &[f64],
    label_i: usize,
    label_j: usize,
    gamma: f64,
    w_i: f64,
    w_j: f64,
    mode: Bootstrap,
) -> LossOutput {
    let z = bootstrap_prediction(logits, mode);
    let ti = target_ce(logits, &bootstrap_target(label_i, w_i, &z));
    let tj = target_ce(logits, &bootstrap_target(label_j, w_j, &z));
    ti.combine(gamma, tj, 1.0 - gamma)
}
