//! Seeded fixtures shared by the kernel benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use x3dugt::primitives::GhostParams;
use x3dugt::{build_model, BlockParams, BlockSpec, ConvParams, Init, Model, ModelConfig, Shape5, Tensor5, VisitParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn input(shape: Shape5, seed: u64) -> Tensor5 {
    Tensor5::random_uniform(shape, -1.0, 1.0, &mut rng(seed))
}

/// Fills every buffer with uniform values in `[-0.5, 0.5)`.
pub fn randomized<P: VisitParams>(mut p: P, seed: u64) -> P {
    let mut r = rng(seed);
    p.visit_mut("", &mut |_, _, _, d| {
        for v in d.iter_mut() {
            *v = rand::Rng::random_range(&mut r, -0.5..0.5);
        }
    });
    p
}

pub fn pointwise(c_in: usize, c_out: usize) -> ConvParams {
    randomized(ConvParams::pointwise(c_in, c_out, false).expect("valid pointwise"), 1)
}

pub fn depthwise(c: usize, kernel: [usize; 3], stride: usize) -> ConvParams {
    randomized(
        ConvParams::depthwise(c, kernel, [1, stride, stride]).expect("valid depthwise"),
        2,
    )
}

pub fn ghost(c_in: usize, c_out: usize, ratio: usize) -> GhostParams {
    let mut g = GhostParams::zeros(c_in, c_out, ratio, 3).expect("valid ghost");
    g.primary = randomized(g.primary, 3);
    g.cheap = g.cheap.map(|c| randomized(c, 4));
    g
}

/// The reference config at a reduced clip size.
pub fn model(frames: usize, side: usize) -> Model {
    let mut cfg = ModelConfig::reference();
    cfg.input = [frames, side, side];
    build_model(&cfg, Init::Seeded(5)).expect("reference config builds")
}

/// First block of stage `stage` from a seeded model, with an input at the
/// block's resolution for a `frames x side x side` clip.
pub fn block(m: &Model, stage: usize) -> (BlockSpec, BlockParams, Tensor5) {
    let (spec, params) = m.stages[stage].blocks[0].clone();
    let mut shape = None;
    let clip = input(m.input_shape(1), 6);
    m.forward_staged(&x3dugt::FastConv, &clip, &mut |id, x| {
        let prev = match stage {
            0 => x3dugt::StageId::Stem,
            s => x3dugt::StageId::Stage(s - 1),
        };
        if id == prev {
            shape = Some(x.shape());
        }
    })
    .expect("forward");
    let x = input(shape.expect("stage reported"), 7);
    (spec, params, x)
}
