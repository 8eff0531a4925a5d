//! Ghost pointwise convolution.
//!
//! A dense `1x1x1` convolution produces `m = ceil(c_out / ratio)` primary
//! channels. The remaining `c_out - m` channels come from a cheap `(1, d, d)`
//! depthwise map of the primary output: cheap channel `j` reads primary
//! channel `j / (ratio - 1)`, so each primary channel feeds at most
//! `ratio - 1` cheap channels. The output is `concat(primary, cheap)`.

use crate::conv::{ConvEngine, ConvParams, FastConv};
use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

#[derive(Clone, Debug, PartialEq)]
pub struct GhostParams {
    pub primary: ConvParams,
    /// Depthwise over the gathered primary channels; `None` when `m == c_out`.
    pub cheap: Option<ConvParams>,
    pub ratio: usize,
}

impl GhostParams {
    pub fn zeros(c_in: usize, c_out: usize, ratio: usize, cheap_kernel: usize) -> Result<Self> {
        if ratio == 0 {
            return Err(Error::contract("GhostParams", "ratio must be >= 1"));
        }
        if c_out == 0 {
            return Err(Error::contract("GhostParams", "c_out must be >= 1"));
        }
        let m = c_out.div_ceil(ratio);
        let cheap_c = c_out - m;
        let primary = ConvParams::pointwise(c_in, m, false)?;
        let cheap = if cheap_c > 0 {
            Some(ConvParams::depthwise(
                cheap_c,
                [1, cheap_kernel, cheap_kernel],
                [1, 1, 1],
            )?)
        } else {
            None
        };
        let g = GhostParams {
            primary,
            cheap,
            ratio,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn c_in(&self) -> usize {
        self.primary.c_in()
    }

    pub fn primary_channels(&self) -> usize {
        self.primary.c_out()
    }

    pub fn cheap_channels(&self) -> usize {
        self.cheap.as_ref().map_or(0, ConvParams::c_out)
    }

    pub fn c_out(&self) -> usize {
        self.primary_channels() + self.cheap_channels()
    }

    /// Primary channel feeding cheap channel `j`.
    pub fn cheap_source(&self, j: usize) -> usize {
        j / (self.ratio - 1).max(1)
    }

    pub fn param_count(&self) -> usize {
        self.primary.param_count() + self.cheap.as_ref().map_or(0, ConvParams::param_count)
    }

    pub fn validate(&self) -> Result<()> {
        let op = "ghost_pointwise";
        if !self.primary.is_pointwise() {
            return Err(Error::contract(op, "primary branch must be a plain 1x1x1 conv"));
        }
        let m = self.primary_channels();
        let c_out = self.c_out();
        if self.ratio == 0 || m != c_out.div_ceil(self.ratio) {
            return Err(Error::contract(
                op,
                format!(
                    "channel bookkeeping: primary {m} + cheap {} = {c_out}, but ceil({c_out}/{}) = {}",
                    self.cheap_channels(),
                    self.ratio,
                    c_out.div_ceil(self.ratio.max(1))
                ),
            ));
        }
        if let Some(cheap) = &self.cheap {
            if !cheap.is_depthwise() || cheap.stride != [1, 1, 1] || cheap.kernel()[0] != 1 {
                return Err(Error::contract(
                    op,
                    "cheap branch must be a stride-1 (1,d,d) depthwise conv",
                ));
            }
            if cheap.c_out() > m * (self.ratio - 1) {
                return Err(Error::contract(
                    op,
                    format!(
                        "cheap branch has {} channels but {m} primary channels at ratio {} can feed at most {}",
                        cheap.c_out(),
                        self.ratio,
                        m * (self.ratio - 1)
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Output shape for an input shape, without running the operator.
    pub fn output_shape(&self, input: Shape5) -> Result<Shape5> {
        let s = self.primary.output_shape("ghost_pointwise", input)?;
        Ok(s.with_c(self.c_out()))
    }
}

pub fn ghost_pointwise(x: &Tensor5, g: &GhostParams) -> Result<Tensor5> {
    ghost_pointwise_with(&FastConv, x, g)
}

pub fn ghost_pointwise_with(eng: &dyn ConvEngine, x: &Tensor5, g: &GhostParams) -> Result<Tensor5> {
    g.validate()?;
    let primary = eng.conv(x, &g.primary)?;
    let Some(cheap) = &g.cheap else {
        return Ok(primary);
    };
    let m = g.primary_channels();
    let gathered;
    let cheap_in = if cheap.c_out() == m && g.ratio == 2 {
        &primary
    } else {
        let s = primary.shape();
        let mut t = Tensor5::zeros(s.with_c(cheap.c_out()));
        for n in 0..s.n() {
            for j in 0..cheap.c_out() {
                t.plane_mut(n, j)
                    .copy_from_slice(primary.plane(n, g.cheap_source(j)));
            }
        }
        gathered = t;
        &gathered
    };
    let ghost = eng.conv(cheap_in, cheap)?;
    Tensor5::concat_channels(&[&primary, &ghost])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::{conv3d_naive, pointwise_conv};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randomize(g: &mut GhostParams, rng: &mut ChaCha8Rng) {
        g.primary.weight = Tensor5::random_uniform(g.primary.weight.shape(), -1.0, 1.0, rng);
        if let Some(c) = &mut g.cheap {
            c.weight = Tensor5::random_uniform(c.weight.shape(), -1.0, 1.0, rng);
        }
    }

    #[test]
    fn param_count_64_to_64() {
        let g = GhostParams::zeros(64, 64, 2, 3).unwrap();
        let stored = g.primary.weight.numel() + g.cheap.as_ref().unwrap().weight.numel();
        assert_eq!(g.param_count(), 2336);
        assert_eq!(stored, 2336);
        assert!(g.param_count() < 64 * 64);
    }

    #[test]
    fn zero_cheap_weights_zero_ghost_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut g = GhostParams::zeros(4, 6, 2, 3).unwrap();
        randomize(&mut g, &mut rng);
        let c = g.cheap.as_mut().unwrap();
        c.weight = Tensor5::zeros(c.weight.shape());
        let x = Tensor5::random_uniform(Shape5::new(2, 4, 2, 3, 3), -1.0, 1.0, &mut rng);
        let y = ghost_pointwise(&x, &g).unwrap();
        assert_eq!(y.shape(), Shape5::new(2, 6, 2, 3, 3));
        for n in 0..2 {
            for c in 3..6 {
                assert!(y.plane(n, c).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn ratio_one_is_plain_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut g = GhostParams::zeros(5, 7, 1, 3).unwrap();
        assert!(g.cheap.is_none());
        randomize(&mut g, &mut rng);
        let x = Tensor5::random_uniform(Shape5::new(1, 5, 2, 3, 4), -1.0, 1.0, &mut rng);
        let a = ghost_pointwise(&x, &g).unwrap();
        let b = pointwise_conv(&x, &g.primary).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn odd_widths_and_higher_ratios_match_dense_masked_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (c_in, c_out, ratio) in [(3, 7, 2), (4, 10, 3), (6, 9, 4), (2, 8, 2)] {
            let mut g = GhostParams::zeros(c_in, c_out, ratio, 3).unwrap();
            randomize(&mut g, &mut rng);
            let x = Tensor5::random_uniform(Shape5::new(1, c_in, 2, 4, 4), -1.0, 1.0, &mut rng);
            let y = ghost_pointwise(&x, &g).unwrap();

            let prim = conv3d_naive(&x, &g.primary).unwrap();
            let cheap = g.cheap.as_ref().unwrap();
            let m = g.primary_channels();
            let mut dense =
                ConvParams::zeros(m, cheap.c_out(), [1, 3, 3], [1; 3], [0, 1, 1], 1, false).unwrap();
            for j in 0..cheap.c_out() {
                for a in 0..3 {
                    for b in 0..3 {
                        let w = cheap.weight.at([j, 0, 0, a, b]);
                        dense.weight.set([j, g.cheap_source(j), 0, a, b], w);
                    }
                }
            }
            let ghost = conv3d_naive(&prim, &dense).unwrap();
            let want = Tensor5::concat_channels(&[&prim, &ghost]).unwrap();
            assert!(y.max_abs_diff(&want).unwrap() <= 1e-6, "{c_in}->{c_out} s={ratio}");
        }
    }

    #[test]
    fn bookkeeping_mismatch_rejected() {
        let mut g = GhostParams::zeros(4, 8, 2, 3).unwrap();
        g.cheap = Some(ConvParams::depthwise(2, [1, 3, 3], [1; 3]).unwrap());
        let x = Tensor5::zeros(Shape5::new(1, 4, 1, 3, 3));
        assert!(ghost_pointwise(&x, &g).is_err());
    }
}
