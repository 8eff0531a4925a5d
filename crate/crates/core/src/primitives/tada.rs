//! Simplified temporal adaptation: channel-wise residual scaling of a
//! depthwise-conv output, `y = x_dw * (1 + alpha * g)`, where the per
//! `(n, c, t)` gate `g` is computed from spatially pooled context through a
//! reduce -> temporal depthwise -> expand bottleneck. With `alpha = 0` the
//! operator is the exact identity.

use crate::conv::{ConvEngine, ConvParams, FastConv};
use crate::error::{Error, Result};
use crate::ops::{activation, broadcast_mul, global_pool, Activation, PoolAxes};
use crate::tensor::Tensor5;

pub fn tada_hidden_width(c: usize, reduction: usize) -> usize {
    (c / reduction.max(1)).max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TadaParams {
    pub reduce: ConvParams,
    /// Depthwise `(3, 1, 1)` over the reduced channels.
    pub temporal: ConvParams,
    pub expand: ConvParams,
    pub alpha: f32,
}

impl TadaParams {
    /// Zero weights and `alpha = 0`.
    pub fn zeros(c: usize, reduction: usize) -> Result<Self> {
        let hidden = tada_hidden_width(c, reduction);
        Ok(TadaParams {
            reduce: ConvParams::pointwise(c, hidden, true)?,
            temporal: ConvParams::depthwise(hidden, [3, 1, 1], [1, 1, 1])?,
            expand: ConvParams::pointwise(hidden, c, true)?,
            alpha: 0.0,
        })
    }

    pub fn channels(&self) -> usize {
        self.reduce.c_in()
    }

    /// Includes the stored blending coefficient.
    pub fn param_count(&self) -> usize {
        self.reduce.param_count() + self.temporal.param_count() + self.expand.param_count() + 1
    }

    /// The gate signal `g` of shape `(n, c, t, 1, 1)`.
    pub fn gate_with(&self, eng: &dyn ConvEngine, x_ctx: &Tensor5) -> Result<Tensor5> {
        let pooled = global_pool(x_ctx, PoolAxes::Spatial)?;
        let hidden = activation(&eng.conv(&pooled, &self.reduce)?, Activation::Relu);
        let mixed = eng.conv(&hidden, &self.temporal)?;
        eng.conv(&mixed, &self.expand)
    }
}

pub fn tada_gate(x_dw: &Tensor5, x_ctx: &Tensor5, p: &TadaParams) -> Result<Tensor5> {
    tada_gate_with(&FastConv, x_dw, x_ctx, p)
}

pub fn tada_gate_with(
    eng: &dyn ConvEngine,
    x_dw: &Tensor5,
    x_ctx: &Tensor5,
    p: &TadaParams,
) -> Result<Tensor5> {
    let (d, c) = (x_dw.shape(), x_ctx.shape());
    if d.n() != c.n() || d.c() != c.c() || d.t() != c.t() {
        return Err(Error::shape(
            "tada_gate",
            format!("x_dw {d} and x_ctx {c} must share (n, c, t)"),
        ));
    }
    if p.channels() != d.c() || p.expand.c_out() != d.c() {
        return Err(Error::shape(
            "tada_gate",
            format!(
                "gate chain {} -> {} does not match {} channels of x_dw",
                p.channels(),
                p.expand.c_out(),
                d.c()
            ),
        ));
    }
    if !p.temporal.is_depthwise() || p.temporal.c_in() != p.reduce.c_out() {
        return Err(Error::contract(
            "tada_gate",
            "temporal stage must be depthwise over the reduced width",
        ));
    }
    let g = p.gate_with(eng, x_ctx)?;
    let alpha = p.alpha;
    let factor = g.map(|v| 1.0 + alpha * v);
    broadcast_mul(x_dw, &factor, "tada_gate")
}
