//! Poly-1 objective: cross-entropy plus `epsilon * (1 - p_y)`.
//!
//! With `p = softmax(z)`, the gradient with respect to the logits is
//! `(p - onehot(y)) * (1 + epsilon * p_y)`: the cross-entropy term gives
//! `p - onehot(y)` and `d(1 - p_y)/dz_j = -p_y (onehot(y)_j - p_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub epsilon: f64,
    pub num_classes: usize,
}

impl LossConfig {
    /// `epsilon = 1.0`, the training setting of the reference recipe.
    pub fn new(num_classes: usize) -> Self {
        LossConfig {
            epsilon: 1.0,
            num_classes,
        }
    }
}

fn check(logits: &[f64], label: usize, cfg: &LossConfig) -> Result<()> {
    if !cfg.epsilon.is_finite() {
        return Err(Error::contract("poly1_loss", "epsilon must be finite"));
    }
    if logits.len() != cfg.num_classes {
        return Err(Error::shape(
            "poly1_loss",
            format!("{} logits for {} classes", logits.len(), cfg.num_classes),
        ));
    }
    if label >= cfg.num_classes {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: cfg.num_classes,
        });
    }
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::contract("poly1_loss", format!("non-finite logit at {i}")));
    }
    Ok(())
}

/// Stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|&v| v - lse).collect()
}

pub fn cross_entropy(logits: &[f64], label: usize, cfg: &LossConfig) -> Result<f64> {
    check(logits, label, cfg)?;
    Ok(-log_softmax(logits)[label])
}

pub fn poly1_loss(logits: &[f64], label: usize, cfg: &LossConfig) -> Result<f64> {
    check(logits, label, cfg)?;
    let log_py = log_softmax(logits)[label];
    Ok(-log_py + cfg.epsilon * (1.0 - log_py.exp()))
}

pub fn poly1_grad(logits: &[f64], label: usize, cfg: &LossConfig) -> Result<Vec<f64>> {
    check(logits, label, cfg)?;
    let p: Vec<f64> = log_softmax(logits).into_iter().map(f64::exp).collect();
    let factor = 1.0 + cfg.epsilon * p[label];
    Ok(p
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            let d = if j == label { pj - 1.0 } else { pj };
            d * factor
        })
        .collect())
}
