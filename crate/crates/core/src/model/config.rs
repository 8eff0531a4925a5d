//! Declarative network description, serialized as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blocks::BlockSpec;
use crate::error::{Error, Result};
use crate::ops::Activation;
use crate::primitives::{SimamConfig, DEFAULT_FOLD_DIV};

const REFERENCE_JSON: &str = include_str!("../../configs/x3d_ugt_ref.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub width: usize,
    /// Block count. Zero makes the stage a pass-through, which requires
    /// `width` to equal the incoming width.
    pub depth: usize,
    /// Temporal adaptation is enabled on the first `tada_first_k` blocks.
    pub tada_first_k: usize,
    pub simam_after: bool,
    pub se_all_blocks: bool,
    pub shift_all_blocks: bool,
    pub expansion: f64,
    /// Spatial stride of the first block.
    #[serde(default = "default_stage_stride")]
    pub spatial_stride: usize,
}

fn default_stage_stride() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub name: String,
    /// Free-text note on where the widths and depths come from; printed
    /// with every cost report.
    #[serde(default)]
    pub provenance: String,
    pub stem_width: usize,
    pub stages: Vec<StageSpec>,
    pub head_mid_width: usize,
    pub num_classes: usize,
    /// `(frames, height, width)`.
    pub input: [usize; 3],
    #[serde(default = "default_ghost_ratio")]
    pub ghost_ratio: usize,
    #[serde(default = "default_kernel")]
    pub ghost_cheap_kernel: usize,
    /// Spatial size of the pre-expansion depthwise conv carried by the first
    /// (strided) block of each stage; 0 disables it.
    #[serde(default = "default_kernel")]
    pub pre_dw_kernel: usize,
    #[serde(default = "default_kernel")]
    pub mid_dw_kernel: usize,
    #[serde(default = "default_fold_div")]
    pub fold_div: usize,
    #[serde(default = "default_se_reduction")]
    pub se_reduction: usize,
    #[serde(default = "default_tada_reduction")]
    pub tada_reduction: usize,
    #[serde(default)]
    pub simam: SimamConfig,
    #[serde(default)]
    pub activation: Activation,
}

fn default_ghost_ratio() -> usize {
    2
}
fn default_kernel() -> usize {
    3
}
fn default_fold_div() -> usize {
    DEFAULT_FOLD_DIV
}
fn default_se_reduction() -> usize {
    16
}
fn default_tada_reduction() -> usize {
    4
}

impl ModelConfig {
    /// The reference configuration shipped in `configs/x3d_ugt_ref.json`.
    pub fn reference() -> Self {
        serde_json::from_str(REFERENCE_JSON).expect("embedded reference config parses")
    }

    pub fn reference_json() -> &'static str {
        REFERENCE_JSON
    }

    /// Reference config with temporal adaptation on the first two blocks of
    /// exactly the stages flagged in `stages` (S1..S4), and nowhere else.
    pub fn with_tada_stages(mut self, stages: [bool; 4]) -> Self {
        for (s, on) in self.stages.iter_mut().zip(stages) {
            s.tada_first_k = if on { 2.min(s.depth) } else { 0 };
        }
        self
    }

    /// Gate-placement variants of the reference: `v1` (all stages),
    /// `v2` (S1+S2), `v3` (S3), `v4` (S4) and `s3s4` (the default).
    pub fn placement_variants() -> Vec<(&'static str, ModelConfig)> {
        let r = Self::reference();
        [
            ("v1", [true, true, true, true]),
            ("v2", [true, true, false, false]),
            ("v3", [false, false, true, false]),
            ("v4", [false, false, false, true]),
            ("s3s4", [false, false, true, true]),
        ]
        .into_iter()
        .map(|(name, on)| {
            let mut c = r.clone().with_tada_stages(on);
            c.name = format!("{}-{name}", r.name);
            (name, c)
        })
        .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Collects every violation instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.stages.len() != 4 {
            errs.push(format!("expected exactly 4 stages, found {}", self.stages.len()));
        }
        if self.stem_width == 0 {
            errs.push("stem_width must be positive".into());
        }
        if self.head_mid_width == 0 {
            errs.push("head_mid_width must be positive".into());
        }
        if self.num_classes == 0 {
            errs.push("num_classes must be positive".into());
        }
        let [frames, h, w] = self.input;
        if frames == 0 || h == 0 || w == 0 {
            errs.push(format!("input dims must be positive, got {:?}", self.input));
        }
        if self.ghost_ratio == 0 {
            errs.push("ghost_ratio must be >= 1".into());
        }
        for (name, k) in [
            ("ghost_cheap_kernel", self.ghost_cheap_kernel),
            ("mid_dw_kernel", self.mid_dw_kernel),
        ] {
            if k == 0 || k % 2 == 0 {
                errs.push(format!("{name} must be odd, got {k}"));
            }
        }
        if self.pre_dw_kernel != 0 && self.pre_dw_kernel % 2 == 0 {
            errs.push(format!("pre_dw_kernel must be odd or 0, got {}", self.pre_dw_kernel));
        }
        if !(self.simam.lambda > 0.0) {
            errs.push(format!("simam.lambda must be positive, got {}", self.simam.lambda));
        }
        let mut c_prev = self.stem_width;
        for (i, s) in self.stages.iter().enumerate() {
            let id = i + 1;
            if s.width == 0 {
                errs.push(format!("stage {id}: width must be positive"));
            }
            if s.tada_first_k > s.depth {
                errs.push(format!(
                    "stage {id}: tada_first_k {} exceeds depth {}",
                    s.tada_first_k, s.depth
                ));
            }
            if !(s.expansion.is_finite() && s.expansion > 0.0) {
                errs.push(format!("stage {id}: expansion must be positive, got {}", s.expansion));
            }
            if !matches!(s.spatial_stride, 1 | 2) {
                errs.push(format!("stage {id}: spatial_stride must be 1 or 2, got {}", s.spatial_stride));
            }
            if s.depth == 0 && s.width != c_prev {
                errs.push(format!(
                    "stage {id}: an empty stage cannot change width ({c_prev} -> {})",
                    s.width
                ));
            }
            if s.depth > 0 && s.shift_all_blocks && (self.fold_div == 0 || c_prev.min(s.width) < self.fold_div) {
                errs.push(format!(
                    "stage {id}: temporal shift needs fold_div {} <= block input width {}",
                    self.fold_div,
                    c_prev.min(s.width)
                ));
            }
            if s.se_all_blocks && self.se_reduction == 0 {
                errs.push(format!("stage {id}: se_reduction must be >= 1"));
            }
            if s.tada_first_k > 0 && self.tada_reduction == 0 {
                errs.push(format!("stage {id}: tada_reduction must be >= 1"));
            }
            c_prev = s.width;
        }
        if errs.is_empty() {
            if let Err(e) = self.spatial_trace() {
                errs.push(e);
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    /// `(h, w)` after the stem and after each stage.
    pub fn spatial_trace(&self) -> std::result::Result<Vec<(usize, usize)>, String> {
        let [_, mut h, mut w] = self.input;
        let stem = |d: usize| (d + 2 - 3) / 2 + 1;
        if h + 2 < 3 || w + 2 < 3 {
            return Err(format!("input {h}x{w} too small for the stem"));
        }
        h = stem(h);
        w = stem(w);
        let mut out = vec![(h, w)];
        for s in &self.stages {
            if s.depth > 0 {
                h = h.div_ceil(s.spatial_stride);
                w = w.div_ceil(s.spatial_stride);
            }
            out.push((h, w));
        }
        Ok(out)
    }

    /// Per-stage block specs.
    pub fn block_specs(&self) -> Vec<Vec<BlockSpec>> {
        let mut c_prev = self.stem_width;
        self.stages
            .iter()
            .map(|s| {
                let blocks = (0..s.depth)
                    .map(|b| {
                        let first = b == 0;
                        let c_in = if first { c_prev } else { s.width };
                        let stride = if first { s.spatial_stride } else { 1 };
                        BlockSpec {
                            c_in,
                            c_out: s.width,
                            expansion: s.expansion,
                            spatial_stride: stride,
                            pre_dw_kernel: if stride > 1 { self.pre_dw_kernel } else { 0 },
                            mid_dw_spatial: self.mid_dw_kernel,
                            use_shift: s.shift_all_blocks,
                            use_tada: b < s.tada_first_k,
                            use_se: s.se_all_blocks,
                            ghost_ratio: self.ghost_ratio,
                            ghost_cheap_kernel: self.ghost_cheap_kernel,
                            fold_div: self.fold_div,
                            se_reduction: self.se_reduction,
                            tada_reduction: self.tada_reduction,
                            activation: self.activation,
                        }
                    })
                    .collect();
                c_prev = s.width;
                blocks
            })
            .collect()
    }

    pub fn final_width(&self) -> usize {
        self.stages.last().map_or(self.stem_width, |s| s.width)
    }
}
