//! Inverted-bottleneck blocks for 3D features.
//!
//! Main path of one block:
//!
//! ```text
//! [temporal shift] -> [pre depthwise (1,k,k) + affine]
//!   -> ghost expand + affine + act
//!   -> temporal depthwise (3,1,1) -> spatial depthwise (1,k,k) + affine + act
//!   -> [temporal-adaptation gate] -> [squeeze-excite]
//!   -> ghost project + affine
//! ```
//!
//! The result is added to the shortcut: the unshifted input when shapes
//! match, otherwise a ghost pointwise projection of the stride-subsampled
//! input followed by an affine. The spatial stride lives in the pre
//! depthwise stage when present and in the spatial depthwise stage otherwise.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::conv::{ConvEngine, ConvParams, FastConv};
use crate::error::{Error, Result};
use crate::model::cost::CostSink;
use crate::ops::{activation, affine_channel, Activation, AffineParams};
use crate::params::{join, VisitParams, Visitor, VisitorMut};
use crate::primitives::{
    ghost_pointwise_with, squeeze_excite_with, tada_gate_with, temporal_shift, GhostParams,
    SEParams, TadaParams,
};
use crate::tensor::{Shape5, Tensor5};

/// Declarative description of one block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub c_in: usize,
    pub c_out: usize,
    /// Expanded width is `round(expansion * c_in)`, at least 8.
    pub expansion: f64,
    /// 1 or 2; the temporal stride is always 1.
    pub spatial_stride: usize,
    /// Spatial size of the optional pre-expansion depthwise conv; 0 = absent.
    pub pre_dw_kernel: usize,
    pub mid_dw_spatial: usize,
    pub use_shift: bool,
    pub use_tada: bool,
    pub use_se: bool,
    pub ghost_ratio: usize,
    pub ghost_cheap_kernel: usize,
    pub fold_div: usize,
    pub se_reduction: usize,
    pub tada_reduction: usize,
    pub activation: Activation,
}

impl BlockSpec {
    /// A plain stride-1 block with the default knobs and every option off.
    pub fn basic(c_in: usize, c_out: usize, expansion: f64) -> Self {
        BlockSpec {
            c_in,
            c_out,
            expansion,
            spatial_stride: 1,
            pre_dw_kernel: 0,
            mid_dw_spatial: 3,
            use_shift: false,
            use_tada: false,
            use_se: false,
            ghost_ratio: 2,
            ghost_cheap_kernel: 3,
            fold_div: crate::primitives::DEFAULT_FOLD_DIV,
            se_reduction: 16,
            tada_reduction: 4,
            activation: Activation::Relu,
        }
    }

    pub fn expanded_width(&self) -> usize {
        round_half_up(self.expansion * self.c_in as f64).max(8)
    }

    pub fn needs_projection_shortcut(&self) -> bool {
        self.c_in != self.c_out || self.spatial_stride != 1
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.c_in == 0 || self.c_out == 0 {
            errs.push(format!("channel counts must be positive (c_in {}, c_out {})", self.c_in, self.c_out));
        }
        if !(self.expansion.is_finite() && self.expansion > 0.0) {
            errs.push(format!("expansion must be a positive real, got {}", self.expansion));
        }
        if !matches!(self.spatial_stride, 1 | 2) {
            errs.push(format!("spatial_stride must be 1 or 2, got {}", self.spatial_stride));
        }
        if self.mid_dw_spatial == 0 || self.mid_dw_spatial % 2 == 0 {
            errs.push(format!("mid_dw_spatial must be odd, got {}", self.mid_dw_spatial));
        }
        if self.pre_dw_kernel % 2 == 0 && self.pre_dw_kernel != 0 {
            errs.push(format!("pre_dw_kernel must be odd or 0, got {}", self.pre_dw_kernel));
        }
        if self.ghost_ratio == 0 {
            errs.push("ghost_ratio must be >= 1".into());
        }
        if self.ghost_cheap_kernel == 0 || self.ghost_cheap_kernel % 2 == 0 {
            errs.push(format!("ghost_cheap_kernel must be odd, got {}", self.ghost_cheap_kernel));
        }
        if self.use_shift && (self.fold_div == 0 || self.c_in < self.fold_div) {
            errs.push(format!(
                "temporal shift needs 1 <= fold_div <= c_in (fold_div {}, c_in {})",
                self.fold_div, self.c_in
            ));
        }
        if self.use_se && self.se_reduction == 0 {
            errs.push("se_reduction must be >= 1".into());
        }
        if self.use_tada && self.tada_reduction == 0 {
            errs.push("tada_reduction must be >= 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }
}

fn round_half_up(v: f64) -> usize {
    (v + 0.5).floor().max(0.0) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct Shortcut {
    pub project: GhostParams,
    pub affine: AffineParams,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub pre_dw: Option<ConvParams>,
    pub pre_dw_affine: Option<AffineParams>,
    pub expand: GhostParams,
    pub expand_affine: AffineParams,
    pub temporal_dw: ConvParams,
    pub spatial_dw: ConvParams,
    pub dw_affine: AffineParams,
    pub tada: Option<TadaParams>,
    pub se: Option<SEParams>,
    pub project: GhostParams,
    pub project_affine: AffineParams,
    pub shortcut: Option<Shortcut>,
}

impl BlockParams {
    /// Zero weights, identity affines, `alpha = 0`; strides placed per the
    /// block's placement rule.
    pub fn zeros(spec: &BlockSpec) -> Result<Self> {
        spec.validate()?;
        let s = spec.spatial_stride;
        let c_exp = spec.expanded_width();
        let (pre_dw, pre_dw_affine, mid_stride) = if spec.pre_dw_kernel > 0 {
            let k = spec.pre_dw_kernel;
            (
                Some(ConvParams::depthwise(spec.c_in, [1, k, k], [1, s, s])?),
                Some(AffineParams::identity(spec.c_in)),
                1,
            )
        } else {
            (None, None, s)
        };
        let k = spec.mid_dw_spatial;
        let shortcut = if spec.needs_projection_shortcut() {
            Some(Shortcut {
                project: GhostParams::zeros(
                    spec.c_in,
                    spec.c_out,
                    spec.ghost_ratio,
                    spec.ghost_cheap_kernel,
                )?,
                affine: AffineParams::identity(spec.c_out),
                stride: s,
            })
        } else {
            None
        };
        Ok(BlockParams {
            pre_dw,
            pre_dw_affine,
            expand: GhostParams::zeros(spec.c_in, c_exp, spec.ghost_ratio, spec.ghost_cheap_kernel)?,
            expand_affine: AffineParams::identity(c_exp),
            temporal_dw: ConvParams::depthwise(c_exp, [3, 1, 1], [1, 1, 1])?,
            spatial_dw: ConvParams::depthwise(c_exp, [1, k, k], [1, mid_stride, mid_stride])?,
            dw_affine: AffineParams::identity(c_exp),
            tada: if spec.use_tada {
                Some(TadaParams::zeros(c_exp, spec.tada_reduction)?)
            } else {
                None
            },
            se: if spec.use_se {
                Some(SEParams::zeros(c_exp, spec.se_reduction)?)
            } else {
                None
            },
            project: GhostParams::zeros(c_exp, spec.c_out, spec.ghost_ratio, spec.ghost_cheap_kernel)?,
            project_affine: AffineParams::identity(spec.c_out),
            shortcut,
        })
    }

    /// Checks that the parameters realize `spec`.
    pub fn validate(&self, spec: &BlockSpec) -> Result<()> {
        let mut errs = Vec::new();
        let pre_stride = self.pre_dw.as_ref().map_or(1, |p| p.stride[1].max(p.stride[2]));
        let mid_stride = self.spatial_dw.stride[1].max(self.spatial_dw.stride[2]);
        if pre_stride > 1 && mid_stride > 1 {
            errs.push(format!(
                "spatial stride placed in both pre_dw ({pre_stride}) and spatial_dw ({mid_stride})"
            ));
        }
        if pre_stride.max(mid_stride) != spec.spatial_stride {
            errs.push(format!(
                "effective spatial stride {} != spec stride {}",
                pre_stride.max(mid_stride),
                spec.spatial_stride
            ));
        }
        if self.pre_dw.is_some() != (spec.pre_dw_kernel > 0) {
            errs.push("pre_dw presence disagrees with spec.pre_dw_kernel".into());
        }
        if self.pre_dw.is_some() != self.pre_dw_affine.is_some() {
            errs.push("pre_dw and its affine must be present together".into());
        }
        if self.temporal_dw.kernel() != [3, 1, 1] || self.temporal_dw.stride != [1, 1, 1] {
            errs.push(format!(
                "temporal_dw must be a stride-1 (3,1,1) kernel, got {:?} stride {:?}",
                self.temporal_dw.kernel(),
                self.temporal_dw.stride
            ));
        }
        if self.spatial_dw.kernel()[0] != 1 || self.spatial_dw.stride[0] != 1 {
            errs.push("spatial_dw must have temporal extent and stride 1".into());
        }
        if self.tada.is_some() != spec.use_tada {
            errs.push("temporal-adaptation params present iff spec.use_tada".into());
        }
        if self.se.is_some() != spec.use_se {
            errs.push("squeeze-excite params present iff spec.use_se".into());
        }
        if self.shortcut.is_some() != spec.needs_projection_shortcut() {
            errs.push("projection shortcut present iff c_in != c_out or stride != 1".into());
        }
        let c_exp = self.expand.c_out();
        if self.expand.c_in() != spec.c_in || self.project.c_out() != spec.c_out {
            errs.push(format!(
                "channel chain {} -> {} -> {} does not match spec {} -> {}",
                self.expand.c_in(),
                c_exp,
                self.project.c_out(),
                spec.c_in,
                spec.c_out
            ));
        }
        if self.project.c_in() != c_exp
            || self.temporal_dw.c_out() != c_exp
            || self.spatial_dw.c_out() != c_exp
        {
            errs.push(format!("depthwise stages and projection must all run at the expanded width {c_exp}"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    pub fn param_count(&self) -> usize {
        let conv = |c: &Option<ConvParams>| c.as_ref().map_or(0, ConvParams::param_count);
        let aff = |a: &Option<AffineParams>| a.as_ref().map_or(0, AffineParams::param_count);
        conv(&self.pre_dw)
            + aff(&self.pre_dw_affine)
            + self.expand.param_count()
            + self.expand_affine.param_count()
            + self.temporal_dw.param_count()
            + self.spatial_dw.param_count()
            + self.dw_affine.param_count()
            + self.tada.as_ref().map_or(0, TadaParams::param_count)
            + self.se.as_ref().map_or(0, SEParams::param_count)
            + self.project.param_count()
            + self.project_affine.param_count()
            + self
                .shortcut
                .as_ref()
                .map_or(0, |s| s.project.param_count() + s.affine.param_count())
    }

    /// Records per-stage cost rows and returns the output shape.
    pub(crate) fn cost(&self, spec: &BlockSpec, input: Shape5, path: &str, sink: &mut CostSink) -> Result<Shape5> {
        let mut h = input;
        if spec.use_shift {
            sink.elementwise(&join(path, "shift"), h.numel());
        }
        if let (Some(pre), Some(aff)) = (&self.pre_dw, &self.pre_dw_affine) {
            h = sink.conv(&join(path, "pre_dw"), pre, h)?;
            sink.affine(&join(path, "pre_dw_affine"), aff, h);
        }
        h = sink.ghost(&join(path, "expand"), &self.expand, h)?;
        sink.affine(&join(path, "expand_affine"), &self.expand_affine, h);
        sink.elementwise(&join(path, "expand_act"), h.numel());
        let ctx = h;
        h = sink.conv(&join(path, "temporal_dw"), &self.temporal_dw, h)?;
        h = sink.conv(&join(path, "spatial_dw"), &self.spatial_dw, h)?;
        sink.affine(&join(path, "dw_affine"), &self.dw_affine, h);
        sink.elementwise(&join(path, "dw_act"), h.numel());
        if let Some(t) = &self.tada {
            let p = join(path, "tada");
            let pooled = Shape5::new(ctx.n(), ctx.c(), ctx.t(), 1, 1);
            sink.elementwise(&join(&p, "pool"), ctx.numel());
            let r = sink.conv(&join(&p, "reduce"), &t.reduce, pooled)?;
            sink.elementwise(&join(&p, "reduce_act"), r.numel());
            let m = sink.conv(&join(&p, "temporal"), &t.temporal, r)?;
            sink.conv(&join(&p, "expand"), &t.expand, m)?;
            sink.scalar(&join(&p, "alpha"));
            sink.elementwise(&join(&p, "scale"), h.numel());
        }
        if let Some(se) = &self.se {
            let p = join(path, "se");
            let pooled = Shape5::new(h.n(), h.c(), 1, 1, 1);
            sink.elementwise(&join(&p, "pool"), h.numel());
            let r = sink.conv(&join(&p, "reduce"), &se.reduce, pooled)?;
            sink.elementwise(&join(&p, "reduce_act"), r.numel());
            let g = sink.conv(&join(&p, "expand"), &se.expand, r)?;
            sink.elementwise(&join(&p, "gate_act"), g.numel());
            sink.elementwise(&join(&p, "scale"), h.numel());
        }
        h = sink.ghost(&join(path, "project"), &self.project, h)?;
        sink.affine(&join(path, "project_affine"), &self.project_affine, h);
        if let Some(sc) = &self.shortcut {
            let p = join(path, "shortcut");
            let sub = Shape5::new(
                input.n(),
                input.c(),
                input.t(),
                input.h().div_ceil(sc.stride),
                input.w().div_ceil(sc.stride),
            );
            let s = sink.ghost(&join(&p, "project"), &sc.project, sub)?;
            sink.affine(&join(&p, "affine"), &sc.affine, s);
        }
        sink.elementwise(&join(path, "residual_add"), h.numel());
        Ok(h)
    }
}

impl VisitParams for Shortcut {
    fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        self.project.visit(&join(prefix, "project"), f);
        self.affine.visit(&join(prefix, "affine"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        self.project.visit_mut(&join(prefix, "project"), f);
        self.affine.visit_mut(&join(prefix, "affine"), f);
    }
}

impl VisitParams for BlockParams {
    fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        self.pre_dw.visit(&join(prefix, "pre_dw"), f);
        self.pre_dw_affine.visit(&join(prefix, "pre_dw_affine"), f);
        self.expand.visit(&join(prefix, "expand"), f);
        self.expand_affine.visit(&join(prefix, "expand_affine"), f);
        self.temporal_dw.visit(&join(prefix, "temporal_dw"), f);
        self.spatial_dw.visit(&join(prefix, "spatial_dw"), f);
        self.dw_affine.visit(&join(prefix, "dw_affine"), f);
        self.tada.visit(&join(prefix, "tada"), f);
        self.se.visit(&join(prefix, "se"), f);
        self.project.visit(&join(prefix, "project"), f);
        self.project_affine.visit(&join(prefix, "project_affine"), f);
        self.shortcut.visit(&join(prefix, "shortcut"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        self.pre_dw.visit_mut(&join(prefix, "pre_dw"), f);
        self.pre_dw_affine.visit_mut(&join(prefix, "pre_dw_affine"), f);
        self.expand.visit_mut(&join(prefix, "expand"), f);
        self.expand_affine.visit_mut(&join(prefix, "expand_affine"), f);
        self.temporal_dw.visit_mut(&join(prefix, "temporal_dw"), f);
        self.spatial_dw.visit_mut(&join(prefix, "spatial_dw"), f);
        self.dw_affine.visit_mut(&join(prefix, "dw_affine"), f);
        self.tada.visit_mut(&join(prefix, "tada"), f);
        self.se.visit_mut(&join(prefix, "se"), f);
        self.project.visit_mut(&join(prefix, "project"), f);
        self.project_affine.visit_mut(&join(prefix, "project_affine"), f);
        self.shortcut.visit_mut(&join(prefix, "shortcut"), f);
    }
}

/// `(3,1,1)` temporal depthwise followed by `(1,k,k)` spatial depthwise.
pub fn factorized_mid_dw(x: &Tensor5, temporal_dw: &ConvParams, spatial_dw: &ConvParams) -> Result<Tensor5> {
    factorized_mid_dw_with(&FastConv, x, temporal_dw, spatial_dw)
}

pub fn factorized_mid_dw_with(
    eng: &dyn ConvEngine,
    x: &Tensor5,
    temporal_dw: &ConvParams,
    spatial_dw: &ConvParams,
) -> Result<Tensor5> {
    for (name, p) in [("temporal", temporal_dw), ("spatial", spatial_dw)] {
        if !p.is_depthwise() {
            return Err(Error::contract(
                "factorized_mid_dw",
                format!(
                    "{name} conv must be depthwise (groups {} c_in {} c_out {})",
                    p.groups,
                    p.c_in(),
                    p.c_out()
                ),
            ));
        }
    }
    let t = eng.conv(x, temporal_dw)?;
    eng.conv(&t, spatial_dw)
}

pub fn uib_forward(x: &Tensor5, spec: &BlockSpec, p: &BlockParams) -> Result<Tensor5> {
    uib_forward_with(&FastConv, x, spec, p)
}

pub fn uib_forward_with(eng: &dyn ConvEngine, x: &Tensor5, spec: &BlockSpec, p: &BlockParams) -> Result<Tensor5> {
    if x.shape().c() != spec.c_in {
        return Err(Error::shape(
            "uib_forward",
            format!("input channel dimension {} != block c_in {}", x.shape().c(), spec.c_in),
        ));
    }
    spec.validate()?;
    p.validate(spec)?;
    let act = spec.activation;

    let mut h: Cow<'_, Tensor5> = if spec.use_shift {
        Cow::Owned(temporal_shift(x, spec.fold_div)?)
    } else {
        Cow::Borrowed(x)
    };
    if let (Some(pre), Some(aff)) = (&p.pre_dw, &p.pre_dw_affine) {
        h = Cow::Owned(affine_channel(&eng.conv(&h, pre)?, aff)?);
    }
    let ctx = activation(
        &affine_channel(&ghost_pointwise_with(eng, &h, &p.expand)?, &p.expand_affine)?,
        act,
    );
    drop(h);
    let dw = factorized_mid_dw_with(eng, &ctx, &p.temporal_dw, &p.spatial_dw)?;
    let mut d = activation(&affine_channel(&dw, &p.dw_affine)?, act);
    if let Some(t) = &p.tada {
        d = tada_gate_with(eng, &d, &ctx, t)?;
    }
    drop(ctx);
    if let Some(se) = &p.se {
        d = squeeze_excite_with(eng, &d, se)?;
    }
    let main = affine_channel(&ghost_pointwise_with(eng, &d, &p.project)?, &p.project_affine)?;
    match &p.shortcut {
        None => main.add(x),
        Some(sc) => {
            let sub = x.subsample_spatial(sc.stride)?;
            let s = affine_channel(&ghost_pointwise_with(eng, &sub, &sc.project)?, &sc.affine)?;
            main.add(&s)
        }
    }
}
