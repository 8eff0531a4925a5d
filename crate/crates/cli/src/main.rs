//! `x3dugt`: analyze configs, run inference on a clip, micro-benchmark the
//! forward pass and run the oracle self-check.
//!
//! Exit codes: 0 success, 2 invalid config or usage, 3 I/O or file-format
//! failure, 4 shape or contract failure, 5 self-check failure.

mod bench;
mod exit;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use exit::{Classify, Failure, Stage};
use x3dugt::model::{load_weights, save_weights};
use x3dugt::ops::softmax;
use x3dugt::preprocess::{load_boxes, load_clip, prepare_clip, CropPolicy, PipelineConfig};
use x3dugt::selfcheck::{run_selfcheck, Fault, SelfcheckOptions};
use x3dugt::{build_model, CostReport, Init, Model, ModelConfig};

#[derive(Parser)]
#[command(name = "x3dugt", version, about = "Compact RGB-only video action recognition")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-layer parameter and MAC table for a config.
    Analyze(AnalyzeArgs),
    /// Classify one clip.
    Infer(InferArgs),
    /// Time the forward pass on a synthetic clip.
    Bench(BenchArgs),
    /// Run every oracle suite.
    Selfcheck(SelfcheckArgs),
    /// Write seeded initial weights for a config.
    InitWeights(InitArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Model config JSON; the built-in reference config when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ModelConfig, Failure> {
        match &self.config {
            Some(p) => ModelConfig::load(p).at(Stage::Config, &format!("config {}", p.display())),
            None => Ok(ModelConfig::reference()),
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Print only the JSON report.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    weights: PathBuf,
    /// Directory of numbered PPM frames, or a raw planar RGB file with a JSON sidecar.
    #[arg(long)]
    clip: PathBuf,
    /// JSON array of per-frame `[x0, y0, x1, y1]`; the full frame when omitted.
    #[arg(long)]
    boxes: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    topk: usize,
    #[arg(long, default_value_t = 5)]
    smooth_window: usize,
    #[arg(long, default_value_t = 0.2)]
    pad_ratio: f32,
    /// Grow crops to squares before resizing instead of warping.
    #[arg(long)]
    square_crop: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Weights to load; seeded weights when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[arg(long, default_value_t = 5)]
    warmups: usize,
    #[arg(long)]
    threads: Option<usize>,
    /// Time each stage separately.
    #[arg(long)]
    per_stage: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long, default_value_t = SelfcheckOptions::default().seed)]
    seed: u64,
    /// Run the identity suite on a 4x64x64 clip instead of the full input.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    json: bool,
    #[arg(long, hide = true)]
    inject_fault: Option<Fault>,
}

#[derive(Args)]
struct InitArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::new(exit::CONFIG, "--threads must be >= 1"));
        }
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Failure::new(exit::IO, format!("thread pool: {e}")))
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

fn analyze(a: &AnalyzeArgs) -> Result<(), Failure> {
    let cfg = a.config.load()?;
    let model = build_model(&cfg, Init::Zeros).at(Stage::Config, "build")?;
    let report: CostReport = model.count_params().at(Stage::Run, "analyze")?;
    if a.json {
        print_json(&report);
    } else {
        print!("{}", report.render_table());
    }
    Ok(())
}

#[derive(Serialize)]
struct Ranked {
    rank: usize,
    class: usize,
    logit: f32,
    prob: f32,
}

#[derive(Serialize)]
struct InferOutput {
    model: String,
    clip: String,
    frames: usize,
    top: Vec<Ranked>,
}

fn load_model(cfg: &ModelConfig, weights: &Path) -> Result<Model, Failure> {
    load_weights(weights, cfg).at(Stage::Weights, &format!("weights {}", weights.display()))
}

fn infer(a: &InferArgs) -> Result<(), Failure> {
    let cfg = a.config.load()?;
    let model = load_model(&cfg, &a.weights)?;
    let clip = load_clip(&a.clip).at(Stage::Clip, &format!("clip {}", a.clip.display()))?;
    let boxes = match &a.boxes {
        Some(p) => Some(load_boxes(p).at(Stage::Clip, &format!("boxes {}", p.display()))?),
        None => None,
    };
    let [frames, h, w] = cfg.input;
    let mut pcfg = PipelineConfig::new(frames, h, w);
    pcfg.smooth_window = a.smooth_window;
    pcfg.crop.pad_ratio = a.pad_ratio;
    if a.square_crop {
        pcfg.crop.policy = CropPolicy::Square;
    }
    let input = prepare_clip(&clip, boxes.as_deref(), &pcfg).at(Stage::Clip, "preprocess")?;
    let logits = pool(a.threads)?
        .install(|| model.forward(&input))
        .at(Stage::Run, "forward")?
        .remove(0);
    let probs = softmax(&logits).at(Stage::Run, "softmax")?;
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&i, &j| logits[j].total_cmp(&logits[i]).then(i.cmp(&j)));
    let top: Vec<Ranked> = order
        .into_iter()
        .take(a.topk.max(1))
        .enumerate()
        .map(|(r, c)| Ranked {
            rank: r + 1,
            class: c,
            logit: logits[c],
            prob: probs[c],
        })
        .collect();
    let out = InferOutput {
        model: cfg.name.clone(),
        clip: a.clip.display().to_string(),
        frames: clip.len(),
        top,
    };
    if a.json {
        print_json(&out);
    } else {
        println!("model: {}  clip: {} ({} frames)", out.model, out.clip, out.frames);
        println!("{:>4} {:>6} {:>14} {:>12}", "rank", "class", "logit", "prob");
        for r in &out.top {
            println!("{:>4} {:>6} {:>14.6} {:>12.6}", r.rank, r.class, r.logit, r.prob);
        }
    }
    Ok(())
}

fn run_bench(a: &BenchArgs) -> Result<(), Failure> {
    let cfg = a.config.load()?;
    let model = match &a.weights {
        Some(p) => load_model(&cfg, p)?,
        None => build_model(&cfg, Init::Seeded(a.seed)).at(Stage::Config, "build")?,
    };
    let pool = pool(a.threads)?;
    let threads = pool.current_num_threads();
    let report = pool
        .install(|| bench::run(&model, a.warmups, a.reps as usize, a.per_stage, threads))
        .at(Stage::Run, "bench")?;
    if a.json {
        print_json(&report);
    } else {
        print!("{}", report.render());
    }
    Ok(())
}

fn selfcheck(a: &SelfcheckArgs) -> Result<(), Failure> {
    let mut opts = if a.quick {
        SelfcheckOptions::quick()
    } else {
        SelfcheckOptions::default()
    };
    opts.seed = a.seed;
    opts.fault = a.inject_fault;
    let report = pool(a.threads)?
        .install(|| run_selfcheck(&opts))
        .at(Stage::Run, "selfcheck")?;
    if a.json {
        #[derive(Serialize)]
        struct Property<'a> {
            suite: &'a str,
            property: &'a str,
            passed: bool,
            detail: &'a str,
        }
        let rows: Vec<Property> = report
            .suites
            .iter()
            .flat_map(|s| {
                s.properties.iter().map(move |p| Property {
                    suite: s.name,
                    property: &p.name,
                    passed: p.passed,
                    detail: &p.detail,
                })
            })
            .collect();
        print_json(&rows);
    } else {
        print!("{}", report.transcript());
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::new(
            exit::SELFCHECK,
            format!("selfcheck failed: {}", report.failures().join(", ")),
        ))
    }
}

fn init_weights(a: &InitArgs) -> Result<(), Failure> {
    let cfg = a.config.load()?;
    let model = build_model(&cfg, Init::Seeded(a.seed)).at(Stage::Config, "build")?;
    save_weights(&model, &a.out).at(Stage::Weights, &format!("write {}", a.out.display()))?;
    println!("wrote {} ({} tensors)", a.out.display(), model.weight_buffers().len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Analyze(a) => analyze(a),
        Cmd::Infer(a) => infer(a),
        Cmd::Bench(a) => run_bench(a),
        Cmd::Selfcheck(a) => selfcheck(a),
        Cmd::InitWeights(a) => init_weights(a),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
