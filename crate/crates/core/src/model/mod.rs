//! Stem, four stages and head assembled from a [`ModelConfig`].

pub mod config;
pub mod cost;
pub mod weights;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::blocks::{uib_forward_with, BlockParams, BlockSpec};
use crate::conv::{ConvEngine, ConvParams, FastConv};
use crate::error::{Error, Result};
use crate::ops::{activation, affine_channel, global_pool, AffineParams, PoolAxes};
use crate::params::{join, ParamKind, VisitParams, Visitor, VisitorMut};
use crate::primitives::{ghost_pointwise_with, simam, GhostParams, SimamConfig};
use crate::tensor::{Shape5, Tensor5};

pub use config::{ModelConfig, StageSpec};
pub use cost::{CostReport, CostRow, CostSink, CostTotals};
pub use weights::{load_weights, read_weights, save_weights, write_weights};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Seeded uniform weights scaled by fan-in; identity affines, zero
    /// biases and zero blending coefficients.
    Seeded(u64),
    /// Every buffer zero, affine scales included.
    Zeros,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stem {
    pub conv: ConvParams,
    pub affine: AffineParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub blocks: Vec<(BlockSpec, BlockParams)>,
    pub simam: Option<SimamConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub project: GhostParams,
    pub affine: AffineParams,
    pub classifier: ConvParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub stem: Stem,
    pub stages: Vec<Stage>,
    pub head: Head,
}

/// Stage boundaries reported by [`Model::forward_staged`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageId {
    Stem,
    Stage(usize),
    Head,
}

impl std::fmt::Display for StageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageId::Stem => f.write_str("stem"),
            StageId::Stage(i) => write!(f, "stage{}", i + 1),
            StageId::Head => f.write_str("head"),
        }
    }
}

pub fn build_model(cfg: &ModelConfig, init: Init) -> Result<Model> {
    cfg.validate()?;
    let stem = Stem {
        conv: ConvParams::zeros(3, cfg.stem_width, [1, 3, 3], [1, 2, 2], [0, 1, 1], 1, false)?,
        affine: AffineParams::identity(cfg.stem_width),
    };
    let stages = cfg
        .block_specs()
        .into_iter()
        .zip(&cfg.stages)
        .map(|(specs, s)| {
            let blocks = specs
                .into_iter()
                .map(|spec| BlockParams::zeros(&spec).map(|p| (spec, p)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Stage {
                blocks,
                simam: s.simam_after.then_some(cfg.simam),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let head = Head {
        project: GhostParams::zeros(
            cfg.final_width(),
            cfg.head_mid_width,
            cfg.ghost_ratio,
            cfg.ghost_cheap_kernel,
        )?,
        affine: AffineParams::identity(cfg.head_mid_width),
        classifier: ConvParams::pointwise(cfg.head_mid_width, cfg.num_classes, true)?,
    };
    let mut m = Model {
        cfg: cfg.clone(),
        stem,
        stages,
        head,
    };
    match init {
        Init::Zeros => m.visit_mut("", &mut |_, _, _, d| d.fill(0.0)),
        Init::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            m.visit_mut("", &mut |_, _, kind, d| {
                if let ParamKind::Weight { fan_in } = kind {
                    let bound = (3.0 / fan_in as f32).sqrt();
                    d.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
                }
            });
        }
    }
    Ok(m)
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn input_shape(&self, batch: usize) -> Shape5 {
        let [t, h, w] = self.cfg.input;
        Shape5::new(batch, 3, t, h, w)
    }

    /// Logits, one vector per batch item.
    pub fn forward(&self, clip: &Tensor5) -> Result<Vec<Vec<f32>>> {
        self.forward_with(&FastConv, clip)
    }

    pub fn forward_with(&self, eng: &dyn ConvEngine, clip: &Tensor5) -> Result<Vec<Vec<f32>>> {
        self.check_input(clip)?;
        let n = clip.shape().n();
        if n == 1 {
            return self.forward_staged(eng, clip, &mut |_, _| {});
        }
        // items are independent; each one runs the same kernels in the same order
        let per_item = (0..n)
            .into_par_iter()
            .map(|i| {
                self.forward_staged(eng, &clip.batch_item(i), &mut |_, _| {})
                    .map(|mut v| v.remove(0))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(per_item)
    }

    fn check_input(&self, clip: &Tensor5) -> Result<()> {
        let s = clip.shape();
        let want = self.input_shape(s.n());
        if s.n() == 0 || s != want {
            return Err(Error::shape(
                "forward",
                format!("expected clip shape {want} (any batch >= 1), got {s}"),
            ));
        }
        Ok(())
    }

    /// Sequential forward pass that reports every stage output to `hook`.
    pub fn forward_staged(
        &self,
        eng: &dyn ConvEngine,
        clip: &Tensor5,
        hook: &mut dyn FnMut(StageId, &Tensor5),
    ) -> Result<Vec<Vec<f32>>> {
        self.check_input(clip)?;
        let act = self.cfg.activation;
        let mut x = activation(
            &affine_channel(&eng.conv(clip, &self.stem.conv)?, &self.stem.affine)?,
            act,
        );
        hook(StageId::Stem, &x);
        for (i, stage) in self.stages.iter().enumerate() {
            for (spec, p) in &stage.blocks {
                x = uib_forward_with(eng, &x, spec, p)?;
            }
            if let Some(cfg) = &stage.simam {
                x = simam(&x, cfg)?;
            }
            hook(StageId::Stage(i), &x);
        }
        let h = activation(
            &affine_channel(
                &ghost_pointwise_with(eng, &x, &self.head.project)?,
                &self.head.affine,
            )?,
            act,
        );
        let pooled = global_pool(&h, PoolAxes::Spatiotemporal)?;
        let logits = eng.conv(&pooled, &self.head.classifier)?;
        hook(StageId::Head, &logits);
        let k = self.cfg.num_classes;
        Ok(logits.data().chunks_exact(k).map(<[f32]>::to_vec).collect())
    }

    /// Per-layer parameters and MACs for the configured input (batch 1).
    pub fn count_params(&self) -> Result<CostReport> {
        self.count_macs(self.input_shape(1))
    }

    /// Per-layer parameters and MACs for an arbitrary input shape.
    pub fn count_macs(&self, input: Shape5) -> Result<CostReport> {
        let mut sink = CostSink::default();
        let mut s = sink.conv("stem.conv", &self.stem.conv, input)?;
        sink.affine("stem.affine", &self.stem.affine, s);
        sink.elementwise("stem.act", s.numel());
        for (i, stage) in self.stages.iter().enumerate() {
            let sp = format!("stages.{i}");
            for (b, (spec, p)) in stage.blocks.iter().enumerate() {
                s = p.cost(spec, s, &join(&sp, &format!("blocks.{b}")), &mut sink)?;
            }
            if stage.simam.is_some() {
                sink.elementwise(&join(&sp, "simam"), s.numel());
            }
        }
        s = sink.ghost("head.project", &self.head.project, s)?;
        sink.affine("head.affine", &self.head.affine, s);
        sink.elementwise("head.act", s.numel());
        sink.elementwise("head.pool", s.numel());
        let pooled = Shape5::new(s.n(), s.c(), 1, 1, 1);
        sink.conv("head.classifier", &self.head.classifier, pooled)?;
        Ok(CostReport::from_rows(
            self.cfg.name.clone(),
            self.cfg.provenance.clone(),
            input,
            sink.rows,
        ))
    }

    /// The same weights with every temporal-adaptation gate removed.
    pub fn without_tada(&self) -> Model {
        let mut m = self.clone();
        for s in &mut m.cfg.stages {
            s.tada_first_k = 0;
        }
        for stage in &mut m.stages {
            for (spec, p) in &mut stage.blocks {
                spec.use_tada = false;
                p.tada = None;
            }
        }
        m
    }

    /// Copies of every parameter buffer in traversal order.
    pub fn weight_buffers(&self) -> Vec<(String, Vec<f32>)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, _, _, d| out.push((name.to_string(), d.to_vec())));
        out
    }
}

impl VisitParams for Model {
    fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        self.stem.conv.visit(&join(prefix, "stem.conv"), f);
        self.stem.affine.visit(&join(prefix, "stem.affine"), f);
        for (i, stage) in self.stages.iter().enumerate() {
            for (b, (_, p)) in stage.blocks.iter().enumerate() {
                p.visit(&join(prefix, &format!("stages.{i}.blocks.{b}")), f);
            }
        }
        self.head.project.visit(&join(prefix, "head.project"), f);
        self.head.affine.visit(&join(prefix, "head.affine"), f);
        self.head.classifier.visit(&join(prefix, "head.classifier"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        self.stem.conv.visit_mut(&join(prefix, "stem.conv"), f);
        self.stem.affine.visit_mut(&join(prefix, "stem.affine"), f);
        for (i, stage) in self.stages.iter_mut().enumerate() {
            for (b, (_, p)) in stage.blocks.iter_mut().enumerate() {
                p.visit_mut(&join(prefix, &format!("stages.{i}.blocks.{b}")), f);
            }
        }
        self.head.project.visit_mut(&join(prefix, "head.project"), f);
        self.head.affine.visit_mut(&join(prefix, "head.affine"), f);
        self.head.classifier.visit_mut(&join(prefix, "head.classifier"), f);
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::conv::ReferenceConv;

    pub(crate) fn tiny_config() -> ModelConfig {
        let mut cfg = ModelConfig::reference();
        cfg.stem_width = 8;
        let widths = [8, 12, 16, 24];
        for (s, w) in cfg.stages.iter_mut().zip(widths) {
            s.width = w;
            s.depth = 2;
            s.expansion = 1.5;
        }
        cfg.head_mid_width = 16;
        cfg.num_classes = 5;
        cfg.input = [4, 32, 32];
        cfg
    }

    #[test]
    fn stem_row_matches_closed_form() {
        let cfg = ModelConfig::reference();
        let m = build_model(&cfg, Init::Zeros).unwrap();
        let r = m.count_params().unwrap();
        let stem = &r.rows[0];
        // c_out * c_in * 1 * 3 * 3, no bias; one MAC per weight per output position
        let weights = cfg.stem_width as u64 * 3 * 9;
        assert_eq!(stem.path, "stem.conv");
        assert_eq!(stem.params, weights);
        assert_eq!(stem.macs, weights * 16 * 112 * 112);
    }

    #[test]
    fn stem_macs_match_loop_counter_on_small_input() {
        let mut cfg = ModelConfig::reference();
        cfg.input = [2, 20, 18];
        let m = build_model(&cfg, Init::Seeded(1)).unwrap();
        let eng = ReferenceConv::new();
        eng.conv(&Tensor5::zeros(m.input_shape(1)), &m.stem.conv).unwrap();
        assert_eq!(eng.macs(), m.count_params().unwrap().rows[0].macs);
    }

    #[test]
    fn param_report_equals_buffer_enumeration() {
        for cfg in [tiny_config(), ModelConfig::reference()] {
            let m = build_model(&cfg, Init::Zeros).unwrap();
            assert_eq!(m.count_params().unwrap().totals.params as usize, m.stored_len());
        }
    }

    #[test]
    fn logits_length_and_zero_model() {
        let cfg = tiny_config();
        let m = build_model(&cfg, Init::Zeros).unwrap();
        let x = Tensor5::full(m.input_shape(2), 0.7);
        let logits = m.forward(&x).unwrap();
        assert_eq!(logits.len(), 2);
        assert!(logits.iter().all(|l| l.len() == 5 && l.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let cfg = tiny_config();
        let a = build_model(&cfg, Init::Seeded(42)).unwrap();
        let b = build_model(&cfg, Init::Seeded(42)).unwrap();
        let c = build_model(&cfg, Init::Seeded(43)).unwrap();
        assert_eq!(a.weight_buffers(), b.weight_buffers());
        assert_ne!(a.weight_buffers(), c.weight_buffers());
        let mut alphas = 0;
        a.visit("", &mut |_, _, k, d| {
            if k == ParamKind::Alpha {
                alphas += 1;
                assert_eq!(d, &[0.0]);
            }
        });
        assert_eq!(alphas, 4);
    }

    #[test]
    fn wrong_input_shape_names_both() {
        let m = build_model(&tiny_config(), Init::Zeros).unwrap();
        let e = m
            .forward(&Tensor5::zeros(Shape5::new(1, 1, 4, 32, 32)))
            .unwrap_err();
        let s = e.to_string();
        assert!(s.contains("(1, 3, 4, 32, 32)") && s.contains("(1, 1, 4, 32, 32)"), "{s}");
    }

    #[test]
    fn batch_items_match_single_runs() {
        let m = build_model(&tiny_config(), Init::Seeded(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor5::random_uniform(m.input_shape(3), -1.0, 1.0, &mut rng);
        let batched = m.forward(&x).unwrap();
        for i in 0..3 {
            assert_eq!(m.forward(&x.batch_item(i)).unwrap()[0], batched[i]);
        }
    }

    #[test]
    fn stage_trace_shapes() {
        let m = build_model(&tiny_config(), Init::Seeded(5)).unwrap();
        let mut seen = Vec::new();
        m.forward_staged(&FastConv, &Tensor5::zeros(m.input_shape(1)), &mut |id, t| {
            seen.push((id.to_string(), t.shape()))
        })
        .unwrap();
        let want = [
            ("stem", Shape5::new(1, 8, 4, 16, 16)),
            ("stage1", Shape5::new(1, 8, 4, 8, 8)),
            ("stage2", Shape5::new(1, 12, 4, 4, 4)),
            ("stage3", Shape5::new(1, 16, 4, 2, 2)),
            ("stage4", Shape5::new(1, 24, 4, 1, 1)),
            ("head", Shape5::new(1, 5, 1, 1, 1)),
        ];
        assert_eq!(seen.len(), want.len());
        for ((name, shape), (wn, ws)) in seen.iter().zip(want) {
            assert_eq!((name.as_str(), *shape), (wn, ws));
        }
    }
}
