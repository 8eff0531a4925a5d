//! Oracle suites run by the `selfcheck` subcommand.
//!
//! Every suite draws its instances from a ChaCha8 stream seeded from the
//! run seed and the suite name, so a given seed always produces the same
//! transcript. A [`Fault`] corrupts one operator as seen by its suite and
//! must make exactly that suite fail.

use std::fmt::Write as _;
use std::hash::Hasher;
use std::str::FromStr;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{factorized_mid_dw, factorized_mid_dw_with};
use crate::conv::{conv3d_naive, depthwise_conv3d, pointwise_conv, ConvParams, FastConv, ReferenceConv};
use crate::error::Result;
use crate::loss::{log_softmax, poly1_grad, poly1_loss, LossConfig};
use crate::model::{build_model, Init, ModelConfig};
use crate::params::VisitParams;
use crate::primitives::{
    ghost_pointwise_with, simam, squeeze_excite_with, tada_gate_with, temporal_shift, temporal_shift_reverse,
    GhostParams, SEParams, SimamConfig, SimamGrouping, TadaParams,
};
use crate::tensor::{Shape5, Tensor5};

/// Deliberate corruptions used to prove each suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Depthwise fast path output perturbed by 1e-3 in one element.
    DepthwiseTap,
    /// Temporal shift run in the opposite direction.
    ShiftDirection,
    /// Blending coefficients set to 1e-3 instead of zero.
    TadaAlpha,
    /// Attention evaluated with ten times the configured lambda.
    SimamLambda,
    /// Gradient computed with epsilon offset by 0.5.
    PolyGradient,
    /// Analyzer total short by one parameter.
    AnalyzerBias,
}

impl Fault {
    pub const ALL: [Fault; 6] = [
        Fault::DepthwiseTap,
        Fault::ShiftDirection,
        Fault::TadaAlpha,
        Fault::SimamLambda,
        Fault::PolyGradient,
        Fault::AnalyzerBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fault::DepthwiseTap => "depthwise-tap",
            Fault::ShiftDirection => "shift-direction",
            Fault::TadaAlpha => "tada-alpha",
            Fault::SimamLambda => "simam-lambda",
            Fault::PolyGradient => "poly-gradient",
            Fault::AnalyzerBias => "analyzer-bias",
        }
    }

    /// The suite this fault is expected to break.
    pub fn target_suite(self) -> &'static str {
        match self {
            Fault::DepthwiseTap => "conv_equivalence",
            Fault::ShiftDirection => "shift_permutation",
            Fault::TadaAlpha => "tada_identity",
            Fault::SimamLambda => "simam_closed_form",
            Fault::PolyGradient => "poly1_gradients",
            Fault::AnalyzerBias => "analyzer_enumeration",
        }
    }
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Fault::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| {
            let names: Vec<_> = Fault::ALL.iter().map(|f| f.name()).collect();
            format!("unknown fault {s:?}; expected one of {}", names.join(", "))
        })
    }
}

#[derive(Clone, Debug)]
pub struct SelfcheckOptions {
    pub seed: u64,
    /// Random instances per operator in the equivalence suite.
    pub instances: usize,
    /// Finite-difference draws in the loss suite.
    pub gradient_draws: usize,
    /// Network used by the identity suite; its input size sets the cost.
    pub identity_config: ModelConfig,
    pub fault: Option<Fault>,
}

impl Default for SelfcheckOptions {
    fn default() -> Self {
        SelfcheckOptions {
            seed: 0x5eed,
            instances: 120,
            gradient_draws: 1000,
            identity_config: ModelConfig::reference(),
            fault: None,
        }
    }
}

impl SelfcheckOptions {
    /// Reference widths on a `4 x 64 x 64` clip: same structure, far cheaper.
    pub fn quick() -> Self {
        let mut o = Self::default();
        o.identity_config.input = [4, 64, 64];
        o
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub properties: Vec<PropertyResult>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.properties.push(PropertyResult {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfcheckReport {
    pub seed: u64,
    pub fault: Option<Fault>,
    pub suites: Vec<SuiteResult>,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }

    /// `suite/property` for every failing property.
    pub fn failures(&self) -> Vec<String> {
        self.suites
            .iter()
            .flat_map(|s| {
                s.properties
                    .iter()
                    .filter(|p| !p.passed)
                    .map(move |p| format!("{}/{}", s.name, p.name))
            })
            .collect()
    }

    pub fn transcript(&self) -> String {
        let mut s = String::new();
        let fault = self.fault.map_or("none", Fault::name);
        let _ = writeln!(s, "selfcheck seed={} fault={fault}", self.seed);
        for suite in &self.suites {
            for p in &suite.properties {
                let tag = if p.passed { "PASS" } else { "FAIL" };
                let _ = writeln!(s, "[{tag}] {}/{}: {}", suite.name, p.name, p.detail);
            }
            let ok = suite.properties.iter().filter(|p| p.passed).count();
            let tag = if suite.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "suite {}: {tag} ({ok}/{})", suite.name, suite.properties.len());
        }
        let failures = self.failures();
        if failures.is_empty() {
            let _ = writeln!(s, "selfcheck: PASS");
        } else {
            let _ = writeln!(s, "selfcheck: FAIL ({})", failures.join(", "));
        }
        s
    }
}

pub const SUITES: [&str; 6] = [
    "conv_equivalence",
    "shift_permutation",
    "tada_identity",
    "simam_closed_form",
    "poly1_gradients",
    "analyzer_enumeration",
];

fn suite_rng(seed: u64, suite: &str) -> ChaCha8Rng {
    let mut h = FnvHasher::default();
    h.write(suite.as_bytes());
    ChaCha8Rng::seed_from_u64(seed ^ h.finish())
}

pub fn run_selfcheck(opts: &SelfcheckOptions) -> Result<SelfcheckReport> {
    let suites = SUITES
        .iter()
        .map(|name| run_suite(name, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(SelfcheckReport {
        seed: opts.seed,
        fault: opts.fault,
        suites,
    })
}

/// Runs one named suite from [`SUITES`].
pub fn run_suite(name: &str, opts: &SelfcheckOptions) -> Result<SuiteResult> {
    let mut rng = suite_rng(opts.seed, name);
    let fault = opts.fault;
    match name {
        "conv_equivalence" => conv_equivalence(&mut rng, opts.instances, fault),
        "shift_permutation" => shift_permutation(&mut rng, fault),
        "tada_identity" => tada_identity(&opts.identity_config, opts.seed, fault),
        "simam_closed_form" => simam_closed_form(&mut rng, fault),
        "poly1_gradients" => poly1_gradients(&mut rng, opts.gradient_draws, fault),
        "analyzer_enumeration" => analyzer_enumeration(fault),
        other => Err(crate::error::Error::contract(
            "selfcheck",
            format!("unknown suite {other:?}"),
        )),
    }
}

fn randomize<P: VisitParams>(p: &mut P, rng: &mut ChaCha8Rng) {
    p.visit_mut("", &mut |_, _, _, d| {
        d.iter_mut().for_each(|v| *v = rng.random_range(-1.0f32..1.0));
    });
}

fn rand_shape(rng: &mut ChaCha8Rng, c: usize) -> Shape5 {
    Shape5::new(
        rng.random_range(1..=2),
        c,
        rng.random_range(1..=4),
        rng.random_range(1..=8),
        rng.random_range(1..=8),
    )
}

fn rand_any_shape(rng: &mut ChaCha8Rng) -> Shape5 {
    let c = rng.random_range(1..=8);
    rand_shape(rng, c)
}

fn rand_input(rng: &mut ChaCha8Rng, c: usize) -> Tensor5 {
    let shape = rand_shape(rng, c);
    rand_tensor(rng, shape)
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Shape5) -> Tensor5 {
    Tensor5::random_uniform(shape, -1.0, 1.0, rng)
}

/// Tracks the worst difference over a batch of instances.
#[derive(Default)]
struct Worst {
    max: f32,
    count: usize,
    error: Option<String>,
}

impl Worst {
    fn record(&mut self, got: Result<Tensor5>, want: Result<Tensor5>) {
        self.count += 1;
        match (got, want) {
            (Ok(g), Ok(w)) => match g.max_abs_diff(&w) {
                Ok(d) if d.is_nan() => self.max = f32::NAN,
                Ok(d) => self.max = if self.max.is_nan() { self.max } else { self.max.max(d) },
                Err(e) => {
                    self.error.get_or_insert(e.to_string());
                }
            },
            (Err(e), _) | (_, Err(e)) => {
                self.error.get_or_insert(e.to_string());
            }
        }
    }

    fn report(&self, suite: &mut SuiteResult, name: &str, tol: f32) {
        let passed = self.error.is_none() && self.max <= tol;
        let detail = match &self.error {
            Some(e) => format!("{} instances, error: {e}", self.count),
            None => format!("{} instances, max |diff| {:e} (tolerance {:e})", self.count, self.max, tol),
        };
        suite.check(name, passed, detail);
    }
}

fn conv_equivalence(rng: &mut ChaCha8Rng, instances: usize, fault: Option<Fault>) -> Result<SuiteResult> {
    let mut suite = SuiteResult {
        name: "conv_equivalence",
        properties: Vec::new(),
    };

    let mut w = Worst::default();
    for _ in 0..instances {
        let c_in = rng.random_range(1..=8);
        let c_out = rng.random_range(1..=8);
        let mut p = ConvParams::pointwise(c_in, c_out, rng.random_bool(0.5))?;
        randomize(&mut p, rng);
        let x = rand_input(rng, c_in);
        w.record(pointwise_conv(&x, &p), conv3d_naive(&x, &p));
    }
    w.report(&mut suite, "pointwise_fast_vs_naive", 0.0);

    let mut w = Worst::default();
    for i in 0..instances {
        let c = rng.random_range(1..=8);
        let kernel = [
            [1, 3][rng.random_range(0..2)],
            [1, 3, 5][rng.random_range(0..3)],
            [1, 3, 5][rng.random_range(0..3)],
        ];
        let stride = [1, rng.random_range(1..=2), rng.random_range(1..=2)];
        let mut p = ConvParams::depthwise(c, kernel, stride)?;
        if rng.random_bool(0.5) {
            p.bias = Some(vec![0.0; c]);
        }
        randomize(&mut p, rng);
        let x = rand_input(rng, c);
        let mut got = depthwise_conv3d(&x, &p);
        if i == 0 && fault == Some(Fault::DepthwiseTap) {
            if let Ok(g) = &mut got {
                g.data_mut()[0] += 1e-3;
            }
        }
        w.record(got, conv3d_naive(&x, &p));
    }
    w.report(&mut suite, "depthwise_fast_vs_naive", 0.0);

    let reference = ReferenceConv::new();
    let mut w = Worst::default();
    for _ in 0..instances {
        let c_in = rng.random_range(1..=8);
        let c_out = rng.random_range(1..=8);
        let ratio = rng.random_range(1..=3);
        let cheap_k = [1, 3][rng.random_range(0..2)];
        let mut g = GhostParams::zeros(c_in, c_out, ratio, cheap_k)?;
        randomize(&mut g, rng);
        let x = rand_input(rng, c_in);
        w.record(ghost_pointwise_with(&FastConv, &x, &g), ghost_pointwise_with(&reference, &x, &g));
    }
    w.report(&mut suite, "ghost_fast_vs_naive_composition", 1e-5);

    let mut w = Worst::default();
    for _ in 0..instances {
        let c = rng.random_range(1..=8);
        let reduction = [1, 2, 4, 16][rng.random_range(0..4)];
        let mut p = SEParams::zeros(c, reduction)?;
        randomize(&mut p, rng);
        let x = rand_input(rng, c);
        w.record(squeeze_excite_with(&FastConv, &x, &p), squeeze_excite_with(&reference, &x, &p));
    }
    w.report(&mut suite, "se_fast_vs_naive_composition", 1e-5);

    let mut w = Worst::default();
    for _ in 0..instances {
        let c = rng.random_range(1..=8);
        let reduction = [1, 2, 4][rng.random_range(0..3)];
        let mut p = TadaParams::zeros(c, reduction)?;
        randomize(&mut p, rng);
        let shape = rand_shape(rng, c);
        let x_dw = rand_tensor(rng, shape);
        let x_ctx = rand_tensor(rng, shape);
        w.record(
            tada_gate_with(&FastConv, &x_dw, &x_ctx, &p),
            tada_gate_with(&reference, &x_dw, &x_ctx, &p),
        );
    }
    w.report(&mut suite, "tada_fast_vs_naive_composition", 1e-5);

    let mut w = Worst::default();
    let mut w_sep = Worst::default();
    for _ in 0..instances {
        let c = rng.random_range(1..=8);
        let k = [1, 3, 5][rng.random_range(0..3)];
        let s = rng.random_range(1..=2);
        let mut td = ConvParams::depthwise(c, [3, 1, 1], [1, 1, 1])?;
        let mut sd = ConvParams::depthwise(c, [1, k, k], [1, s, s])?;
        randomize(&mut td, rng);
        randomize(&mut sd, rng);
        let x = rand_input(rng, c);
        w.record(factorized_mid_dw(&x, &td, &sd), factorized_mid_dw_with(&reference, &x, &td, &sd));
        // a single (3, k, k) kernel holding the outer product of the two factors
        let full_w = Tensor5::from_fn(Shape5::new(c, 1, 3, k, k), |[ci, _, a, b, d]| {
            td.weight.at([ci, 0, a, 0, 0]) * sd.weight.at([ci, 0, 0, b, d])
        });
        let full = ConvParams::new(full_w, None, [1, s, s], [1, k / 2, k / 2], c)?;
        w_sep.record(factorized_mid_dw(&x, &td, &sd), conv3d_naive(&x, &full));
    }
    w.report(&mut suite, "factorized_fast_vs_naive_composition", 1e-5);
    w_sep.report(&mut suite, "factorized_vs_full_separable_kernel", 1e-5);

    Ok(suite)
}

fn shift_permutation(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<SuiteResult> {
    let mut suite = SuiteResult {
        name: "shift_permutation",
        properties: Vec::new(),
    };
    let forward = |x: &Tensor5, fd: usize| {
        if fault == Some(Fault::ShiftDirection) {
            temporal_shift_reverse(x, fd)
        } else {
            temporal_shift(x, fd)
        }
    };
    let mut cases = 0;
    let mut perm_fail: Option<String> = None;
    let mut recover_fail: Option<String> = None;
    for fd in [2usize, 4, 8] {
        for c in fd..=16 {
            for t in 1..=8 {
                cases += 1;
                let shape = Shape5::new(1, c, t, 2, 3);
                let x = rand_tensor(rng, shape);
                let y = forward(&x, fd)?;
                let fold = c / fd;
                // channel ranges [0, fold) read t + 1, [fold, 2 fold) read t - 1
                let want = Tensor5::from_fn(shape, |[n, ci, ti, hi, wi]| {
                    let src = if ci < fold {
                        ti.checked_add(1).filter(|&s| s < t)
                    } else if ci < 2 * fold {
                        ti.checked_sub(1)
                    } else {
                        Some(ti)
                    };
                    src.map_or(0.0, |s| x.at([n, ci, s, hi, wi]))
                });
                if perm_fail.is_none() && !y.bit_eq(&want) {
                    perm_fail = Some(format!("c={c} t={t} fold_div={fd}"));
                }
                let back = temporal_shift_reverse(&y, fd)?;
                for ti in 1..t.saturating_sub(1) {
                    for ci in 0..c {
                        let ok = (0..6).all(|i| {
                            let (hi, wi) = (i / 3, i % 3);
                            back.at([0, ci, ti, hi, wi]).to_bits() == x.at([0, ci, ti, hi, wi]).to_bits()
                        });
                        if !ok && recover_fail.is_none() {
                            recover_fail = Some(format!("c={c} t={t} fold_div={fd} frame {ti}"));
                        }
                    }
                }
            }
        }
    }
    let detail = |f: &Option<String>| match f {
        None => format!("{cases} cases exact"),
        Some(at) => format!("first mismatch at {at}"),
    };
    suite.check("permutation_zero_fill", perm_fail.is_none(), detail(&perm_fail));
    suite.check("opposite_shift_recovers_interior", recover_fail.is_none(), detail(&recover_fail));
    Ok(suite)
}

fn tada_identity(cfg: &ModelConfig, seed: u64, fault: Option<Fault>) -> Result<SuiteResult> {
    let mut suite = SuiteResult {
        name: "tada_identity",
        properties: Vec::new(),
    };
    let mut m = build_model(cfg, Init::Seeded(seed))?;
    let mut alphas = 0usize;
    let mut all_zero = true;
    for stage in &mut m.stages {
        for (_, p) in &mut stage.blocks {
            if let Some(t) = &mut p.tada {
                alphas += 1;
                if fault == Some(Fault::TadaAlpha) {
                    t.alpha = 1e-3;
                }
                all_zero &= t.alpha == 0.0;
            }
        }
    }
    suite.check(
        "alphas_initialized_to_zero",
        alphas > 0 && all_zero,
        format!("{alphas} gates, all alpha = 0: {all_zero}"),
    );
    let plain = m.without_tada();
    let shape = m.input_shape(1);
    let mut rng = suite_rng(seed, "tada_identity.input");
    let x = rand_tensor(&mut rng, shape);
    let a = m.forward(&x)?;
    let b = plain.forward(&x)?;
    let same = a.len() == b.len()
        && a.iter()
            .zip(&b)
            .all(|(p, q)| p.len() == q.len() && p.iter().zip(q).all(|(u, v)| u.to_bits() == v.to_bits()));
    suite.check(
        "forward_bit_identical_to_gateless",
        same,
        format!("input {shape}, {} logits compared", a.iter().map(Vec::len).sum::<usize>()),
    );
    Ok(suite)
}

/// `x * sigmoid(1 / e*)` with `e* = 4 (var + l) / ((x - mean)^2 + 2 var + 2 l)`.
fn simam_oracle(group: &[f32], lambda: f64) -> Vec<f64> {
    let n = group.len() as f64;
    let mean = group.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = group.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    group
        .iter()
        .map(|&v| {
            let d2 = (v as f64 - mean).powi(2);
            let e = 4.0 * (var + lambda) / (d2 + 2.0 * var + 2.0 * lambda);
            v as f64 / (1.0 + (-1.0 / e).exp())
        })
        .collect()
}

fn simam_closed_form(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<SuiteResult> {
    let mut suite = SuiteResult {
        name: "simam_closed_form",
        properties: Vec::new(),
    };
    let cfg = SimamConfig::default();
    let run_cfg = if fault == Some(Fault::SimamLambda) {
        SimamConfig {
            lambda: cfg.lambda * 10.0,
            ..cfg
        }
    } else {
        cfg
    };

    let r = ModelConfig::reference();
    let mut without = r.clone();
    without.stages.iter_mut().for_each(|s| s.simam_after = false);
    let with_p = build_model(&r, Init::Zeros)?.count_params()?.totals.params;
    let without_p = build_model(&without, Init::Zeros)?.count_params()?.totals.params;
    suite.check(
        "zero_learnable_parameters",
        cfg.param_count() == 0 && with_p == without_p,
        format!("reference params {with_p} with attention, {without_p} without"),
    );

    let sig_half = 1.0 / (1.0 + (-0.5f64).exp());
    let mut worst = 0f64;
    for _ in 0..20 {
        let v = rng.random_range(-4.0f32..4.0);
        let x = Tensor5::full(rand_any_shape(rng), v);
        if x.shape().volume() < 2 {
            continue;
        }
        let y = simam(&x, &run_cfg)?;
        for &o in y.data() {
            worst = worst.max((o as f64 - sig_half * v as f64).abs());
        }
    }
    suite.check(
        "constant_input_scales_by_sigmoid_half",
        worst <= 1e-6,
        format!("max |y - sigmoid(0.5) x| {worst:e} (tolerance 1e-6)"),
    );

    let mut worst = 0f64;
    let mut tensors = 0;
    while tensors < 100 {
        let shape = rand_any_shape(rng);
        let grouping = if rng.random_bool(0.5) {
            SimamGrouping::Spatiotemporal
        } else {
            SimamGrouping::PerFrame
        };
        let oracle_cfg = SimamConfig { grouping, ..cfg };
        let group = oracle_cfg.group_size(&Tensor5::zeros(shape));
        if group < 2 {
            continue;
        }
        tensors += 1;
        let x = rand_tensor(rng, shape);
        let y = simam(&x, &SimamConfig { grouping, ..run_cfg })?;
        for (xs, ys) in x.data().chunks_exact(group).zip(y.data().chunks_exact(group)) {
            for (o, want) in ys.iter().zip(simam_oracle(xs, cfg.lambda as f64)) {
                worst = worst.max((*o as f64 - want).abs());
            }
        }
    }
    suite.check(
        "matches_energy_formula",
        worst <= 1e-6,
        format!("{tensors} tensors, max |diff| {worst:e} (tolerance 1e-6)"),
    );
    Ok(suite)
}

fn poly1_gradients(rng: &mut ChaCha8Rng, draws: usize, fault: Option<Fault>) -> Result<SuiteResult> {
    let mut suite = SuiteResult {
        name: "poly1_gradients",
        properties: Vec::new(),
    };
    let grad = |z: &[f64], y: usize, cfg: &LossConfig| {
        if fault == Some(Fault::PolyGradient) {
            let shifted = LossConfig {
                epsilon: cfg.epsilon + 0.5,
                ..*cfg
            };
            poly1_grad(z, y, &shifted)
        } else {
            poly1_grad(z, y, cfg)
        }
    };

    let mut worst = 0f64;
    for k in [2usize, 5, 10, 60] {
        for eps in [0.0, 1.0, 2.0] {
            let cfg = LossConfig { epsilon: eps, num_classes: k };
            let l = poly1_loss(&vec![0.7; k], k - 1, &cfg)?;
            let want = (k as f64).ln() + eps * (1.0 - 1.0 / k as f64);
            worst = worst.max((l - want).abs());
        }
    }
    suite.check(
        "uniform_logits_closed_form",
        worst <= 1e-6,
        format!("max |loss - (ln K + eps (1 - 1/K))| {worst:e} (tolerance 1e-6)"),
    );

    let h = 1e-3;
    let mut worst = 0f64;
    for _ in 0..draws {
        let k = rng.random_range(2..=60);
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y = rng.random_range(0..k);
        let cfg = LossConfig {
            epsilon: rng.random_range(0.0..2.0),
            num_classes: k,
        };
        let g = grad(&z, y, &cfg)?;
        let mut fd = vec![0f64; k];
        for j in 0..k {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            fd[j] = (poly1_loss(&zp, y, &cfg)? - poly1_loss(&zm, y, &cfg)?) / (2.0 * h);
        }
        let scale = fd.iter().fold(0f64, |m, v| m.max(v.abs())).max(1e-8);
        let err = g.iter().zip(&fd).fold(0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        worst = worst.max(err);
    }
    suite.check(
        "matches_central_differences",
        worst <= 1e-4,
        format!("{draws} draws, h = 1e-3, max relative error {worst:e} (tolerance 1e-4)"),
    );

    let mut exact = true;
    for _ in 0..100 {
        let k = rng.random_range(2..=20);
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y = rng.random_range(0..k);
        let cfg = LossConfig { epsilon: 0.0, num_classes: k };
        let g = grad(&z, y, &cfg)?;
        let p: Vec<f64> = log_softmax(&z).into_iter().map(f64::exp).collect();
        exact &= g
            .iter()
            .enumerate()
            .all(|(j, &v)| v.to_bits() == (p[j] - if j == y { 1.0 } else { 0.0 }).to_bits());
    }
    suite.check(
        "epsilon_zero_is_cross_entropy_gradient",
        exact,
        "100 draws compared bit for bit",
    );
    Ok(suite)
}

/// Small networks whose loop-counted MACs stay under 1e7.
pub fn mac_audit_configs() -> Vec<ModelConfig> {
    let mut out = Vec::new();
    let mut r = ModelConfig::reference();
    r.name = format!("{}@2x16x16", r.name);
    r.input = [2, 16, 16];
    out.push(r.clone());
    let mut v1 = ModelConfig::reference().with_tada_stages([true; 4]);
    v1.name = format!("{}-v1@2x24x20", v1.name);
    v1.input = [2, 24, 20];
    out.push(v1);
    let mut odd = r;
    odd.name = "odd-widths".into();
    odd.stem_width = 12;
    for (s, (w, d)) in odd.stages.iter_mut().zip([(12, 1), (20, 2), (27, 2), (33, 2)]) {
        s.width = w;
        s.depth = d;
        s.tada_first_k = s.tada_first_k.min(d);
        s.expansion = 1.7;
    }
    odd.stages[1].spatial_stride = 1;
    odd.ghost_ratio = 3;
    odd.pre_dw_kernel = 5;
    odd.head_mid_width = 45;
    odd.num_classes = 7;
    odd.simam.grouping = SimamGrouping::PerFrame;
    odd.input = [3, 18, 14];
    out.push(odd);
    out
}

fn analyzer_enumeration(fault: Option<Fault>) -> Result<SuiteResult> {
    let mut suite = SuiteResult {
        name: "analyzer_enumeration",
        properties: Vec::new(),
    };
    let bias = if fault == Some(Fault::AnalyzerBias) { 1 } else { 0 };

    let mut rows = Vec::new();
    let mut ok = true;
    let mut configs = vec![("reference", ModelConfig::reference())];
    configs.extend(ModelConfig::placement_variants().into_iter().filter(|(n, _)| *n != "s3s4"));
    for (name, cfg) in configs {
        let m = build_model(&cfg, Init::Zeros)?;
        let analytic = m.count_params()?.totals.params - bias;
        let mut enumerated = 0u64;
        m.visit("", &mut |_, shape, _, data| {
            debug_assert_eq!(shape.iter().product::<usize>(), data.len());
            enumerated += data.len() as u64;
        });
        ok &= analytic == enumerated;
        rows.push(format!("{name} {analytic}/{enumerated}"));
    }
    suite.check("params_equal_buffer_enumeration", ok, rows.join(", "));

    let mut rows = Vec::new();
    let mut ok = true;
    for cfg in mac_audit_configs() {
        let m = build_model(&cfg, Init::Seeded(3))?;
        let input = m.input_shape(1);
        let analytic = m.count_macs(input)?.totals.macs;
        let counter = ReferenceConv::new();
        m.forward_with(&counter, &Tensor5::full(input, 0.25))?;
        let counted = counter.macs();
        ok &= analytic == counted && counted <= 10_000_000;
        rows.push(format!("{} {analytic}/{counted}", cfg.name));
    }
    suite.check("macs_equal_loop_counter", ok, rows.join(", "));
    Ok(suite)
}
