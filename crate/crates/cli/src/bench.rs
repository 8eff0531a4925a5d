use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use x3dugt::{FastConv, Model, Tensor5};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub samples: usize,
    pub min_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl Stats {
    /// Nearest-rank p95; the median averages the two middle samples when
    /// the count is even. `None` for an empty sample set.
    pub fn from_samples(samples: &[f64]) -> Option<Stats> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Some(Stats {
            samples: n,
            min_ms: s[0],
            median_ms: median,
            p95_ms: s[rank - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub stats: Stats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub input: [usize; 5],
    pub warmups: usize,
    pub reps: usize,
    pub threads: usize,
    /// Empty unless per-stage timing was requested.
    pub stages: Vec<StageTiming>,
    pub end_to_end: Stats,
    pub clips_per_sec: f64,
    /// Peak resident set in KiB, when the platform reports it.
    pub peak_rss_kib: Option<u64>,
    pub logits: Vec<f32>,
}

impl BenchReport {
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let [n, c, t, h, w] = self.input;
        let _ = writeln!(s, "model:   {}", self.model);
        let _ = writeln!(s, "input:   ({n}, {c}, {t}, {h}, {w})");
        let _ = writeln!(
            s,
            "runs:    {} warmups, {} reps, {} threads",
            self.warmups, self.reps, self.threads
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>12} {:>12} {:>12}",
            "stage", "samples", "min ms", "median ms", "p95 ms"
        );
        let rows = self
            .stages
            .iter()
            .map(|st| (st.stage.as_str(), &st.stats))
            .chain(std::iter::once(("end-to-end", &self.end_to_end)));
        for (name, st) in rows {
            let _ = writeln!(
                s,
                "{:<12} {:>8} {:>12.3} {:>12.3} {:>12.3}",
                name, st.samples, st.min_ms, st.median_ms, st.p95_ms
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "clips/sec: {:.3}", self.clips_per_sec);
        match self.peak_rss_kib {
            Some(k) => {
                let _ = writeln!(s, "peak RSS:  {k} KiB");
            }
            None => {
                let _ = writeln!(s, "peak RSS:  unavailable");
            }
        }
        s
    }
}

/// `VmHWM` from `/proc/self/status`.
pub fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Deterministic synthetic clip in `[-1, 1)`.
pub fn synthetic_clip(model: &Model) -> Tensor5 {
    Tensor5::from_fn(model.input_shape(1), |[_, c, t, h, w]| {
        ((c * 31 + t * 17 + h * 7 + w * 3) % 64) as f32 / 32.0 - 1.0
    })
}

pub fn run(model: &Model, warmups: usize, reps: usize, per_stage: bool, threads: usize) -> x3dugt::Result<BenchReport> {
    let clip = synthetic_clip(model);
    let mut logits = Vec::new();
    for _ in 0..warmups {
        model.forward(&clip)?;
    }
    let mut totals = Vec::with_capacity(reps);
    let mut per: Vec<(String, Vec<f64>)> = Vec::new();
    for _ in 0..reps {
        let start = Instant::now();
        let out = if per_stage {
            let mut last = start;
            let mut i = 0;
            model.forward_staged(&FastConv, &clip, &mut |id, _| {
                let now = Instant::now();
                if per.len() <= i {
                    per.push((id.to_string(), Vec::with_capacity(reps)));
                }
                per[i].1.push(ms(now - last));
                last = now;
                i += 1;
            })?
        } else {
            model.forward(&clip)?
        };
        totals.push(ms(start.elapsed()));
        logits = out.into_iter().next().unwrap_or_default();
    }
    let end_to_end = Stats::from_samples(&totals).expect("reps >= 1");
    Ok(BenchReport {
        model: model.config().name.clone(),
        input: model.input_shape(1).0,
        warmups,
        reps,
        threads,
        stages: per
            .into_iter()
            .map(|(stage, s)| StageTiming {
                stage,
                stats: Stats::from_samples(&s).expect("one sample per rep"),
            })
            .collect(),
        clips_per_sec: 1e3 / end_to_end.median_ms.max(f64::MIN_POSITIVE),
        end_to_end,
        peak_rss_kib: peak_rss_kib(),
        logits,
    })
}
