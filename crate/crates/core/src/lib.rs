//! Compact RGB-only video action recognition: 3D operators, the network
//! builder and cost analyzer, the Poly-1 objective and the clip
//! preprocessing pipeline.
//!
//! Tensors are `(batch, channels, frames, height, width)` with `f32` data.

pub mod blocks;
pub mod conv;
pub mod error;
pub mod loss;
pub mod model;
pub mod ops;
pub mod params;
pub mod preprocess;
pub mod primitives;
pub mod selfcheck;
pub mod tensor;

pub use blocks::{BlockParams, BlockSpec};
pub use conv::{conv3d_naive, ConvEngine, ConvParams, FastConv, ReferenceConv};
pub use error::{Error, Result, WeightsError};
pub use loss::{poly1_grad, poly1_loss, LossConfig};
pub use model::{build_model, CostReport, Init, Model, ModelConfig, StageId, StageSpec};
pub use params::{ParamKind, VisitParams};
pub use tensor::{Shape5, Tensor5};
