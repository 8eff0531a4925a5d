//! Pooling, per-channel affine, nonlinearities and softmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolAxes {
    /// Mean over `(h, w)`; `t` is kept.
    Spatial,
    /// Mean over `(t, h, w)`.
    Spatiotemporal,
}

/// Arithmetic mean over the pooled axes, summed in ascending index order.
pub fn global_pool(x: &Tensor5, axes: PoolAxes) -> Result<Tensor5> {
    let [n, c, t, h, w] = x.shape().0;
    if x.numel() == 0 {
        return Err(Error::shape(
            "global_pool",
            format!("cannot pool empty tensor {}", x.shape()),
        ));
    }
    match axes {
        PoolAxes::Spatial => {
            let hw = h * w;
            let data = x
                .data()
                .chunks_exact(hw)
                .map(|frame| frame.iter().fold(0.0f32, |a, &v| a + v) / hw as f32)
                .collect();
            Tensor5::from_vec(Shape5::new(n, c, t, 1, 1), data)
        }
        PoolAxes::Spatiotemporal => {
            let vol = t * h * w;
            let data = x
                .data()
                .chunks_exact(vol)
                .map(|p| p.iter().fold(0.0f32, |a, &v| a + v) / vol as f32)
                .collect();
            Tensor5::from_vec(Shape5::new(n, c, 1, 1, 1), data)
        }
    }
}

/// Folded per-channel normalization: `y = x * scale[c] + shift[c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineParams {
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
}

impl AffineParams {
    pub fn identity(c: usize) -> Self {
        AffineParams {
            scale: vec![1.0; c],
            shift: vec![0.0; c],
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    pub fn param_count(&self) -> usize {
        self.scale.len() + self.shift.len()
    }
}

pub fn affine_channel(x: &Tensor5, a: &AffineParams) -> Result<Tensor5> {
    let c = x.shape().c();
    if a.scale.len() != c || a.shift.len() != c {
        return Err(Error::shape(
            "affine_channel",
            format!(
                "scale/shift lengths {}/{} do not match channel count {c}",
                a.scale.len(),
                a.shift.len()
            ),
        ));
    }
    let mut out = x.clone();
    let vol = x.shape().volume();
    if vol == 0 {
        return Ok(out);
    }
    for (i, plane) in out.data_mut().chunks_exact_mut(vol).enumerate() {
        let ch = i % c;
        let (s, b) = (a.scale[ch], a.shift[ch]);
        for v in plane {
            *v = *v * s + b;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
}

#[inline]
pub fn relu(v: f32) -> f32 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

pub fn activation(x: &Tensor5, kind: Activation) -> Tensor5 {
    match kind {
        Activation::Relu => x.map(relu),
        Activation::Sigmoid => x.map(sigmoid),
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f32]) -> Result<Vec<f32>> {
    if logits.is_empty() {
        return Err(Error::contract("softmax", "empty input"));
    }
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::contract(
            "softmax",
            format!("non-finite logit at index {i}"),
        ));
    }
    let m = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let e: Vec<f32> = logits.iter().map(|&v| (v - m).exp()).collect();
    let z: f32 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

/// Broadcast-multiply `x` by a gate of shape `(n, c, 1|t, 1, 1)`.
pub(crate) fn broadcast_mul(x: &Tensor5, gate: &Tensor5, op: &'static str) -> Result<Tensor5> {
    let xs = x.shape();
    let gs = gate.shape();
    let t_ok = gs.t() == 1 || gs.t() == xs.t();
    if gs.n() != xs.n() || gs.c() != xs.c() || !t_ok || gs.h() != 1 || gs.w() != 1 {
        return Err(Error::shape(
            op,
            format!("gate {} cannot broadcast onto {}", gs, xs),
        ));
    }
    let mut out = x.clone();
    let hw = xs.h() * xs.w();
    if hw == 0 {
        return Ok(out);
    }
    let per_t = gs.t() != 1;
    let t = xs.t();
    for (i, frame) in out.data_mut().chunks_exact_mut(hw).enumerate() {
        // frame index i enumerates (n, c, t)
        let nc = i / t;
        let g = if per_t { gate.data()[i] } else { gate.data()[nc] };
        for v in frame {
            *v *= g;
        }
    }
    Ok(out)
}
