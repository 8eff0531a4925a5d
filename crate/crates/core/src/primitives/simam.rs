//! Parameter-free attention. Every element is weighted by
//! `sigmoid(1 / e*)` with the minimal energy
//! `e* = 4 (var + lambda) / ((x - mean)^2 + 2 var + 2 lambda)`,
//! where `mean` and `var` (denominator `n - 1`) are taken over the element's group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::sigmoid;
use crate::tensor::Tensor5;

pub const DEFAULT_SIMAM_LAMBDA: f32 = 1e-4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimamGrouping {
    /// One group per `(batch, channel)` over `t * h * w` elements.
    #[default]
    Spatiotemporal,
    /// One group per `(batch, channel, frame)` over `h * w` elements.
    PerFrame,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimamConfig {
    pub lambda: f32,
    #[serde(default)]
    pub grouping: SimamGrouping,
}

impl Default for SimamConfig {
    fn default() -> Self {
        SimamConfig {
            lambda: DEFAULT_SIMAM_LAMBDA,
            grouping: SimamGrouping::Spatiotemporal,
        }
    }
}

impl SimamConfig {
    /// Always zero.
    pub fn param_count(&self) -> usize {
        0
    }

    pub fn group_size(&self, x: &Tensor5) -> usize {
        let s = x.shape();
        match self.grouping {
            SimamGrouping::Spatiotemporal => s.volume(),
            SimamGrouping::PerFrame => s.h() * s.w(),
        }
    }
}

pub fn simam(x: &Tensor5, cfg: &SimamConfig) -> Result<Tensor5> {
    if !(cfg.lambda > 0.0) {
        return Err(Error::contract("simam", format!("lambda must be positive, got {}", cfg.lambda)));
    }
    let n = cfg.group_size(x);
    if n < 2 {
        return Err(Error::contract(
            "simam",
            format!("group size {n} leaves the variance undefined (need >= 2 elements)"),
        ));
    }
    let lambda = cfg.lambda as f64;
    let mut out = x.clone();
    for group in out.data_mut().chunks_exact_mut(n) {
        let mean = group.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let var = group
            .iter()
            .map(|&v| {
                let d = v as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / (n - 1) as f64;
        let denom = 4.0 * (var + lambda);
        for v in group.iter_mut() {
            let d = *v as f64 - mean;
            // 1/e* = d^2 / (4 (var + lambda)) + 1/2
            let inv_energy = d * d / denom + 0.5;
            *v *= sigmoid(inv_energy as f32);
        }
    }
    Ok(out)
}
