//! Dense rank-5 `(n, c, t, h, w)` tensor with `w` fastest.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// Shape of a [`Tensor5`], in `(n, c, t, h, w)` order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub struct Shape5(pub [usize; 5]);

impl Shape5 {
    pub const fn new(n: usize, c: usize, t: usize, h: usize, w: usize) -> Self {
        Shape5([n, c, t, h, w])
    }

    pub fn n(&self) -> usize {
        self.0[0]
    }
    pub fn c(&self) -> usize {
        self.0[1]
    }
    pub fn t(&self) -> usize {
        self.0[2]
    }
    pub fn h(&self) -> usize {
        self.0[3]
    }
    pub fn w(&self) -> usize {
        self.0[4]
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Elements per `(n, c)` plane: `t * h * w`.
    pub fn volume(&self) -> usize {
        self.t() * self.h() * self.w()
    }

    pub fn with_c(self, c: usize) -> Self {
        let mut s = self;
        s.0[1] = c;
        s
    }
}

impl fmt::Debug for Shape5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [n, c, t, h, w] = self.0;
        write!(f, "({n}, {c}, {t}, {h}, {w})")
    }
}

impl fmt::Display for Shape5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor5 {
    shape: Shape5,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor5")
            .field("shape", &self.shape)
            .field("numel", &self.data.len())
            .finish()
    }
}

impl Tensor5 {
    pub fn zeros(shape: Shape5) -> Self {
        Tensor5 {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn full(shape: Shape5, value: f32) -> Self {
        Tensor5 {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(shape: Shape5, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::shape(
                "Tensor5::from_vec",
                format!(
                    "data length {} does not match shape {shape} ({} elements)",
                    data.len(),
                    shape.numel()
                ),
            ));
        }
        Ok(Tensor5 { shape, data })
    }

    pub fn from_fn(shape: Shape5, mut f: impl FnMut([usize; 5]) -> f32) -> Self {
        let [n, c, t, h, w] = shape.0;
        let mut data = Vec::with_capacity(shape.numel());
        for i0 in 0..n {
            for i1 in 0..c {
                for i2 in 0..t {
                    for i3 in 0..h {
                        for i4 in 0..w {
                            data.push(f([i0, i1, i2, i3, i4]));
                        }
                    }
                }
            }
        }
        Tensor5 { shape, data }
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn random_uniform<R: Rng + ?Sized>(shape: Shape5, lo: f32, hi: f32, rng: &mut R) -> Self {
        let data = (0..shape.numel()).map(|_| rng.random_range(lo..hi)).collect();
        Tensor5 { shape, data }
    }

    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn offset(&self, idx: [usize; 5]) -> usize {
        let [_, c, t, h, w] = self.shape.0;
        (((idx[0] * c + idx[1]) * t + idx[2]) * h + idx[3]) * w + idx[4]
    }

    #[inline]
    pub fn at(&self, idx: [usize; 5]) -> f32 {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 5], v: f32) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Contiguous `t*h*w` slice for batch item `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let v = self.shape.volume();
        let start = (n * self.shape.c() + c) * v;
        &self.data[start..start + v]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let v = self.shape.volume();
        let start = (n * self.shape.c() + c) * v;
        &mut self.data[start..start + v]
    }

    /// Largest absolute elementwise difference. Shapes must match.
    pub fn max_abs_diff(&self, other: &Tensor5) -> Result<f32> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "max_abs_diff",
                format!("{} vs {}", self.shape, other.shape),
            ));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    /// Bitwise equality, distinguishing `+0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Tensor5) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, alpha: f32) -> Tensor5 {
        self.map(|v| v * alpha)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor5 {
        Tensor5 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Tensor5) -> Result<Tensor5> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "add",
                format!("{} vs {}", self.shape, other.shape),
            ));
        }
        Ok(Tensor5 {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(parts: &[&Tensor5]) -> Result<Tensor5> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat_channels", "no inputs"))?;
        let base = first.shape;
        let mut c_total = 0;
        for p in parts {
            let s = p.shape;
            if s.n() != base.n() || s.t() != base.t() || s.h() != base.h() || s.w() != base.w() {
                return Err(Error::shape(
                    "concat_channels",
                    format!("non-channel dims differ: {} vs {}", base, s),
                ));
            }
            c_total += s.c();
        }
        let out_shape = base.with_c(c_total);
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..base.n() {
            for p in parts {
                for c in 0..p.shape.c() {
                    data.extend_from_slice(p.plane(n, c));
                }
            }
        }
        Ok(Tensor5 {
            shape: out_shape,
            data,
        })
    }

    /// Keep every `stride`-th row and column (`x[..., ::s, ::s]`).
    pub fn subsample_spatial(&self, stride: usize) -> Result<Tensor5> {
        if stride == 0 {
            return Err(Error::contract("subsample_spatial", "stride must be >= 1"));
        }
        if stride == 1 {
            return Ok(self.clone());
        }
        let [n, c, t, h, w] = self.shape.0;
        let (ho, wo) = (h.div_ceil(stride), w.div_ceil(stride));
        let out_shape = Shape5::new(n, c, t, ho, wo);
        let mut data = Vec::with_capacity(out_shape.numel());
        for i0 in 0..n {
            for i1 in 0..c {
                for i2 in 0..t {
                    for y in 0..ho {
                        for x in 0..wo {
                            data.push(self.at([i0, i1, i2, y * stride, x * stride]));
                        }
                    }
                }
            }
        }
        Ok(Tensor5 {
            shape: out_shape,
            data,
        })
    }

    /// Batch item `n` as a standalone `(1, c, t, h, w)` tensor.
    pub fn batch_item(&self, n: usize) -> Tensor5 {
        let per = self.shape.numel() / self.shape.n().max(1);
        let mut shape = self.shape;
        shape.0[0] = 1;
        Tensor5 {
            shape,
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    /// Stack `(1, c, t, h, w)` tensors along the batch axis.
    pub fn stack_batch(items: Vec<Tensor5>) -> Result<Tensor5> {
        let first = items
            .first()
            .ok_or_else(|| Error::contract("stack_batch", "no inputs"))?
            .shape;
        let mut data = Vec::with_capacity(first.numel() * items.len());
        for it in &items {
            if it.shape != first {
                return Err(Error::shape(
                    "stack_batch",
                    format!("{} vs {}", first, it.shape),
                ));
            }
            data.extend_from_slice(&it.data);
        }
        let mut shape = first;
        shape.0[0] = items.len();
        Ok(Tensor5 { shape, data })
    }
}
