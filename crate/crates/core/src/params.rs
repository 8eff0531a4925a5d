//! Named enumeration of every stored parameter buffer.
//!
//! Weight files, seeded initialization and the buffer-length side of the
//! parameter audit all walk models through this one traversal, so their
//! orderings can never drift apart.

use crate::conv::ConvParams;
use crate::ops::AffineParams;
use crate::primitives::{GhostParams, SEParams, TadaParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Convolution kernel; `fan_in` is `c_in / groups * k_t * k_h * k_w`.
    Weight { fan_in: usize },
    Bias,
    Scale,
    Shift,
    /// Blending coefficient of a temporal-adaptation gate.
    Alpha,
}

pub type Visitor<'a> = dyn FnMut(&str, &[usize], ParamKind, &[f32]) + 'a;
pub type VisitorMut<'a> = dyn FnMut(&str, &[usize], ParamKind, &mut [f32]) + 'a;

pub trait VisitParams {
    fn visit(&self, prefix: &str, f: &mut Visitor<'_>);
    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>);

    /// Sum of stored buffer lengths.
    fn stored_len(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, _, data| n += data.len());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl VisitParams for ConvParams {
    fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        let fan_in = self.taps();
        f(
            &join(prefix, "weight"),
            &self.weight.shape().0,
            ParamKind::Weight { fan_in },
            self.weight.data(),
        );
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), &[b.len()], ParamKind::Bias, b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        let fan_in = self.taps();
        let shape = self.weight.shape().0;
        f(
            &join(prefix, "weight"),
            &shape,
            ParamKind::Weight { fan_in },
            self.weight.data_mut(),
        );
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), &[b.len()], ParamKind::Bias, b);
        }
    }
}

impl VisitParams for AffineParams {
    fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        f(&join(prefix, "scale"), &[self.scale.len()], ParamKind::Scale, &self.scale);
        f(&join(prefix, "shift"), &[self.shift.len()], ParamKind::Shift, &self.shift);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        let (ls, lb) = (self.scale.len(), self.shift.len());
        f(&join(prefix, "scale"), &[ls], ParamKind::Scale, &mut self.scale);
        f(&join(prefix, "shift"), &[lb], ParamKind::Shift, &mut self.shift);
    }
}

impl VisitParams for GhostParams {
    fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        self.primary.visit(&join(prefix, "primary"), f);
        if let Some(c) = &self.cheap {
            c.visit(&join(prefix, "cheap"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        self.primary.visit_mut(&join(prefix, "primary"), f);
        if let Some(c) = &mut self.cheap {
            c.visit_mut(&join(prefix, "cheap"), f);
        }
    }
}

impl VisitParams for SEParams {
    fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        self.reduce.visit(&join(prefix, "reduce"), f);
        self.expand.visit(&join(prefix, "expand"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        self.reduce.visit_mut(&join(prefix, "reduce"), f);
        self.expand.visit_mut(&join(prefix, "expand"), f);
    }
}

impl VisitParams for TadaParams {
    fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        self.reduce.visit(&join(prefix, "reduce"), f);
        self.temporal.visit(&join(prefix, "temporal"), f);
        self.expand.visit(&join(prefix, "expand"), f);
        f(
            &join(prefix, "alpha"),
            &[1],
            ParamKind::Alpha,
            std::slice::from_ref(&self.alpha),
        );
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        self.reduce.visit_mut(&join(prefix, "reduce"), f);
        self.temporal.visit_mut(&join(prefix, "temporal"), f);
        self.expand.visit_mut(&join(prefix, "expand"), f);
        f(
            &join(prefix, "alpha"),
            &[1],
            ParamKind::Alpha,
            std::slice::from_mut(&mut self.alpha),
        );
    }
}

impl<T: VisitParams> VisitParams for Option<T> {
    fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        if let Some(v) = self {
            v.visit(prefix, f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        if let Some(v) = self {
            v.visit_mut(prefix, f);
        }
    }
}
