//! The five architectural primitives, each usable on its own.

mod ghost;
mod se;
mod shift;
mod simam;
mod tada;

pub use ghost::{ghost_pointwise, ghost_pointwise_with, GhostParams};
pub use se::{se_hidden_width, squeeze_excite, squeeze_excite_with, SEParams};
pub use shift::{temporal_shift, temporal_shift_reverse, DEFAULT_FOLD_DIV};
pub use simam::{simam, SimamConfig, SimamGrouping, DEFAULT_SIMAM_LAMBDA};
pub use tada::{tada_gate, tada_gate_with, tada_hidden_width, TadaParams};
