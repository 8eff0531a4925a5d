//! 3D convolution: the naive reference kernel, its specialized fast paths,
//! and the [`ConvEngine`] switch used by every composite operator.
//!
//! All kernels are cross-correlations (no kernel flip) with zero padding and
//! floor output-size arithmetic. Each output element is accumulated in `f32`
//! starting from `0.0`, over input channels ascending and then `k_t, k_h, k_w`
//! ascending, with the bias added last. Padded taps are skipped rather than
//! multiplied by zero. The fast paths keep exactly this per-element order, so
//! they agree with [`conv3d_naive`] bit for bit.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    /// `(c_out, c_in / groups, k_t, k_h, k_w)`.
    pub weight: Tensor5,
    pub bias: Option<Vec<f32>>,
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub groups: usize,
}

impl ConvParams {
    pub fn new(
        weight: Tensor5,
        bias: Option<Vec<f32>>,
        stride: [usize; 3],
        padding: [usize; 3],
        groups: usize,
    ) -> Result<Self> {
        let p = ConvParams {
            weight,
            bias,
            stride,
            padding,
            groups,
        };
        p.validate()?;
        Ok(p)
    }

    /// Zero-filled parameters for a `c_in -> c_out` convolution.
    #[allow(clippy::too_many_arguments)]
    pub fn zeros(
        c_in: usize,
        c_out: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
        groups: usize,
        bias: bool,
    ) -> Result<Self> {
        if groups == 0 || c_in % groups != 0 {
            return Err(Error::contract(
                "ConvParams",
                format!("c_in {c_in} not divisible by groups {groups}"),
            ));
        }
        let [kt, kh, kw] = kernel;
        Self::new(
            Tensor5::zeros(Shape5::new(c_out, c_in / groups, kt, kh, kw)),
            bias.then(|| vec![0.0; c_out]),
            stride,
            padding,
            groups,
        )
    }

    /// Bias-free `1x1x1` convolution.
    pub fn pointwise(c_in: usize, c_out: usize, bias: bool) -> Result<Self> {
        Self::zeros(c_in, c_out, [1, 1, 1], [1, 1, 1], [0, 0, 0], 1, bias)
    }

    /// Bias-free depthwise convolution with "same" padding.
    pub fn depthwise(c: usize, kernel: [usize; 3], stride: [usize; 3]) -> Result<Self> {
        let padding = [kernel[0] / 2, kernel[1] / 2, kernel[2] / 2];
        Self::zeros(c, c, kernel, stride, padding, c, false)
    }

    pub fn validate(&self) -> Result<()> {
        let op = "ConvParams";
        let s = self.weight.shape();
        if self.groups == 0 {
            return Err(Error::contract(op, "groups must be positive"));
        }
        if s.c() == 0 || s.n() == 0 {
            return Err(Error::contract(op, format!("empty kernel {s}")));
        }
        if s.n() % self.groups != 0 {
            return Err(Error::contract(
                op,
                format!("c_out {} not divisible by groups {}", s.n(), self.groups),
            ));
        }
        if s.t() == 0 || s.h() == 0 || s.w() == 0 {
            return Err(Error::contract(op, format!("zero kernel extent {s}")));
        }
        if self.stride.contains(&0) {
            return Err(Error::contract(op, "stride must be >= 1 in every axis"));
        }
        if let Some(b) = &self.bias {
            if b.len() != s.n() {
                return Err(Error::shape(
                    op,
                    format!("bias length {} != c_out {}", b.len(), s.n()),
                ));
            }
        }
        Ok(())
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape().n()
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape().c() * self.groups
    }

    pub fn kernel(&self) -> [usize; 3] {
        let s = self.weight.shape();
        [s.t(), s.h(), s.w()]
    }

    /// Multiplies per output element.
    pub fn taps(&self) -> usize {
        let s = self.weight.shape();
        s.c() * s.t() * s.h() * s.w()
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel() == [1, 1, 1]
            && self.stride == [1, 1, 1]
            && self.padding == [0, 0, 0]
            && self.groups == 1
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.c_in() && self.groups == self.c_out()
    }

    /// Closed-form parameter count: `c_out * (c_in/groups) * k_t*k_h*k_w` plus bias.
    pub fn param_count(&self) -> usize {
        let s = self.weight.shape();
        s.n() * s.c() * s.t() * s.h() * s.w() + if self.bias.is_some() { s.n() } else { 0 }
    }

    pub fn output_shape(&self, op: &'static str, input: Shape5) -> Result<Shape5> {
        if input.c() != self.c_in() {
            return Err(Error::shape(
                op,
                format!(
                    "input channel dimension c={} but kernel expects c_in={} (groups={})",
                    input.c(),
                    self.c_in(),
                    self.groups
                ),
            ));
        }
        let k = self.kernel();
        let dims = [input.t(), input.h(), input.w()];
        let names = ["t", "h", "w"];
        let mut out = [0usize; 3];
        for a in 0..3 {
            let padded = dims[a] + 2 * self.padding[a];
            if padded < k[a] {
                return Err(Error::shape(
                    op,
                    format!(
                        "dimension {}: input {} + 2*pad {} is smaller than kernel {}",
                        names[a], dims[a], self.padding[a], k[a]
                    ),
                ));
            }
            out[a] = (padded - k[a]) / self.stride[a] + 1;
        }
        Ok(Shape5::new(input.n(), self.c_out(), out[0], out[1], out[2]))
    }
}

/// Direct correlation over all six loops. The general oracle for every
/// other convolution path in the crate.
pub fn conv3d_naive(x: &Tensor5, p: &ConvParams) -> Result<Tensor5> {
    naive_impl(x, p, None)
}

fn naive_impl(x: &Tensor5, p: &ConvParams, counter: Option<&AtomicU64>) -> Result<Tensor5> {
    p.validate()?;
    let out_shape = p.output_shape("conv3d_naive", x.shape())?;
    let mut out = Tensor5::zeros(out_shape);
    let [_, c_in_total, ti, hi, wi] = x.shape().0;
    let [_, c_out, to, ho, wo] = out_shape.0;
    let [kt, kh, kw] = p.kernel();
    let cin_g = p.weight.shape().c();
    let cout_g = c_out / p.groups;
    let [st, sh, sw] = p.stride;
    let [pt, ph, pw] = p.padding.map(|v| v as isize);
    let xs = x.data();
    let ws = p.weight.data();
    let plane = to * ho * wo;

    let taps_total: u64 = out
        .data_mut()
        .par_chunks_mut(plane.max(1))
        .enumerate()
        .map(|(nc, dst)| {
            let (n, co) = (nc / c_out, nc % c_out);
            let g = co / cout_g;
            let bias = p.bias.as_ref().map(|b| b[co]);
            let mut taps = 0u64;
            let mut i = 0;
            for ot in 0..to {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut acc = 0.0f32;
                        for cl in 0..cin_g {
                            let ci = g * cin_g + cl;
                            let xbase = (n * c_in_total + ci) * ti * hi * wi;
                            let wbase = (co * cin_g + cl) * kt * kh * kw;
                            for a in 0..kt {
                                let it = (ot * st) as isize + a as isize - pt;
                                for b in 0..kh {
                                    let ih = (oh * sh) as isize + b as isize - ph;
                                    for c in 0..kw {
                                        taps += 1;
                                        let iw = (ow * sw) as isize + c as isize - pw;
                                        if it < 0
                                            || ih < 0
                                            || iw < 0
                                            || it >= ti as isize
                                            || ih >= hi as isize
                                            || iw >= wi as isize
                                        {
                                            continue;
                                        }
                                        let xo = xbase
                                            + (it as usize * hi + ih as usize) * wi
                                            + iw as usize;
                                        acc += xs[xo] * ws[wbase + (a * kh + b) * kw + c];
                                    }
                                }
                            }
                        }
                        dst[i] = match bias {
                            Some(b) => acc + b,
                            None => acc,
                        };
                        i += 1;
                    }
                }
            }
            taps
        })
        .sum();
    if let Some(c) = counter {
        c.fetch_add(taps_total, Ordering::Relaxed);
    }
    Ok(out)
}

/// Fast path for `1x1x1`, stride-1, unpadded, ungrouped convolution.
pub fn pointwise_conv(x: &Tensor5, p: &ConvParams) -> Result<Tensor5> {
    p.validate()?;
    if !p.is_pointwise() {
        return Err(Error::contract(
            "pointwise_conv",
            format!(
                "requires kernel (1,1,1), stride 1, padding 0, groups 1; got kernel {:?}, stride {:?}, padding {:?}, groups {}",
                p.kernel(),
                p.stride,
                p.padding,
                p.groups
            ),
        ));
    }
    let out_shape = p.output_shape("pointwise_conv", x.shape())?;
    let mut out = Tensor5::zeros(out_shape);
    let c_in = p.c_in();
    let c_out = p.c_out();
    let vol = out_shape.volume();
    let ws = p.weight.data();
    out.data_mut()
        .par_chunks_mut(vol.max(1))
        .enumerate()
        .for_each(|(nc, dst)| {
            let (n, co) = (nc / c_out, nc % c_out);
            for ci in 0..c_in {
                let w = ws[co * c_in + ci];
                let src = x.plane(n, ci);
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s * w;
                }
            }
            if let Some(b) = &p.bias {
                let b = b[co];
                for d in dst.iter_mut() {
                    *d += b;
                }
            }
        });
    Ok(out)
}

/// Fast path for depthwise convolution (`groups == c_in == c_out`).
pub fn depthwise_conv3d(x: &Tensor5, p: &ConvParams) -> Result<Tensor5> {
    p.validate()?;
    if !p.is_depthwise() {
        return Err(Error::contract(
            "depthwise_conv3d",
            format!(
                "requires groups == c_in == c_out; got groups {}, c_in {}, c_out {}",
                p.groups,
                p.c_in(),
                p.c_out()
            ),
        ));
    }
    let out_shape = p.output_shape("depthwise_conv3d", x.shape())?;
    let mut out = Tensor5::zeros(out_shape);
    let [_, c, ti, hi, wi] = x.shape().0;
    let [_, _, to, ho, wo] = out_shape.0;
    let [kt, kh, kw] = p.kernel();
    let [st, sh, sw] = p.stride;
    let [pt, ph, pw] = p.padding;
    let ws = p.weight.data();
    let ksz = kt * kh * kw;
    out.data_mut()
        .par_chunks_mut(out_shape.volume().max(1))
        .enumerate()
        .for_each(|(nc, dst)| {
            let (n, ch) = (nc / c, nc % c);
            let src = x.plane(n, ch);
            let wk = &ws[ch * ksz..(ch + 1) * ksz];
            let bias = p.bias.as_ref().map(|b| b[ch]);
            let mut i = 0;
            for ot in 0..to {
                // valid tap range along each axis: 0 <= o*s + k - p < d
                let (a0, a1) = tap_range(ot * st, pt, kt, ti);
                for oh in 0..ho {
                    let (b0, b1) = tap_range(oh * sh, ph, kh, hi);
                    for ow in 0..wo {
                        let (c0, c1) = tap_range(ow * sw, pw, kw, wi);
                        let mut acc = 0.0f32;
                        for a in a0..a1 {
                            let it = ot * st + a - pt;
                            for b in b0..b1 {
                                let ih = oh * sh + b - ph;
                                let row = (it * hi + ih) * wi;
                                let wrow = (a * kh + b) * kw;
                                for cc in c0..c1 {
                                    let iw = ow * sw + cc - pw;
                                    acc += src[row + iw] * wk[wrow + cc];
                                }
                            }
                        }
                        dst[i] = match bias {
                            Some(b) => acc + b,
                            None => acc,
                        };
                        i += 1;
                    }
                }
            }
        });
    Ok(out)
}

/// Kernel offsets `k` in `[lo, hi)` such that `base + k - pad` lies in `[0, dim)`.
#[inline]
fn tap_range(base: usize, pad: usize, k: usize, dim: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(base);
    let hi = (dim + pad).saturating_sub(base).min(k);
    (lo.min(hi), hi)
}

/// Selects the kernels used by composite operators.
pub trait ConvEngine: Sync {
    fn conv(&self, x: &Tensor5, p: &ConvParams) -> Result<Tensor5>;
}

/// Dispatches to the pointwise or depthwise fast path when the parameters
/// allow it, and to [`conv3d_naive`] otherwise.
#[derive(Clone, Copy, Debug, Default)]
pub struct FastConv;

impl ConvEngine for FastConv {
    fn conv(&self, x: &Tensor5, p: &ConvParams) -> Result<Tensor5> {
        if p.is_pointwise() {
            pointwise_conv(x, p)
        } else if p.is_depthwise() {
            depthwise_conv3d(x, p)
        } else {
            conv3d_naive(x, p)
        }
    }
}

/// Runs every convolution through [`conv3d_naive`] and counts the kernel
/// taps it visits, padded taps included. The count is the instrumented
/// multiply-accumulate total that the analytic cost model must reproduce.
#[derive(Debug, Default)]
pub struct ReferenceConv {
    taps: AtomicU64,
}

impl ReferenceConv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn macs(&self) -> u64 {
        self.taps.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.taps.store(0, Ordering::Relaxed);
    }
}

impl ConvEngine for ReferenceConv {
    fn conv(&self, x: &Tensor5, p: &ConvParams) -> Result<Tensor5> {
        naive_impl(x, p, Some(&self.taps))
    }
}
