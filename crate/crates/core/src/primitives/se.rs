use crate::conv::{ConvEngine, ConvParams, FastConv};
use crate::error::{Error, Result};
use crate::ops::{activation, broadcast_mul, global_pool, Activation, PoolAxes};
use crate::tensor::Tensor5;

/// Hidden width of the squeeze bottleneck: `c / reduction`, at least 4.
pub fn se_hidden_width(c: usize, reduction: usize) -> usize {
    (c / reduction.max(1)).max(4)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SEParams {
    pub reduce: ConvParams,
    pub expand: ConvParams,
    pub reduction: usize,
}

impl SEParams {
    pub fn zeros(c: usize, reduction: usize) -> Result<Self> {
        if reduction == 0 {
            return Err(Error::contract("SEParams", "reduction must be >= 1"));
        }
        let hidden = se_hidden_width(c, reduction);
        Ok(SEParams {
            reduce: ConvParams::pointwise(c, hidden, true)?,
            expand: ConvParams::pointwise(hidden, c, true)?,
            reduction,
        })
    }

    pub fn channels(&self) -> usize {
        self.reduce.c_in()
    }

    pub fn param_count(&self) -> usize {
        self.reduce.param_count() + self.expand.param_count()
    }

    fn validate(&self, c: usize) -> Result<()> {
        if self.reduce.c_in() != c || self.expand.c_out() != c {
            return Err(Error::shape(
                "squeeze_excite",
                format!(
                    "input has {c} channels, gate chain is {} -> {} -> {}",
                    self.reduce.c_in(),
                    self.reduce.c_out(),
                    self.expand.c_out()
                ),
            ));
        }
        if self.reduce.c_out() != self.expand.c_in() {
            return Err(Error::shape(
                "squeeze_excite",
                format!(
                    "hidden widths disagree: reduce emits {}, expand takes {}",
                    self.reduce.c_out(),
                    self.expand.c_in()
                ),
            ));
        }
        Ok(())
    }
}

pub fn squeeze_excite(x: &Tensor5, p: &SEParams) -> Result<Tensor5> {
    squeeze_excite_with(&FastConv, x, p)
}

/// `x * sigmoid(expand(relu(reduce(mean_{t,h,w}(x)))))`.
pub fn squeeze_excite_with(eng: &dyn ConvEngine, x: &Tensor5, p: &SEParams) -> Result<Tensor5> {
    p.validate(x.shape().c())?;
    let pooled = global_pool(x, PoolAxes::Spatiotemporal)?;
    let hidden = activation(&eng.conv(&pooled, &p.reduce)?, Activation::Relu);
    let gate = activation(&eng.conv(&hidden, &p.expand)?, Activation::Sigmoid);
    broadcast_mul(x, &gate, "squeeze_excite")
}
