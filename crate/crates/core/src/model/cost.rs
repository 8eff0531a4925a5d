//! Parameter and multiply-accumulate accounting.
//!
//! Convolutions contribute `c_out * (c_in/groups) * k_t*k_h*k_w (+ c_out)`
//! parameters and `output elements * (c_in/groups) * k_t*k_h*k_w` MACs.
//! Padded taps are counted, which is the usual convention. Affines,
//! activations, shifts, pooling, gating multiplies, attention and residual
//! adds carry no MACs; their touched-element counts go in a separate
//! `elementwise_ops` column.

use serde::{Deserialize, Serialize};

use crate::conv::ConvParams;
use crate::error::Result;
use crate::ops::AffineParams;
use crate::params::join;
use crate::primitives::GhostParams;
use crate::tensor::Shape5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub path: String,
    pub params: u64,
    pub macs: u64,
    pub elementwise_ops: u64,
    pub output_shape: [usize; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostTotals {
    pub params: u64,
    pub macs: u64,
    pub elementwise_ops: u64,
    /// `macs / 1e9` (one FLOP per multiply-accumulate).
    pub gflops_mac1: f64,
    /// `2 * macs / 1e9` (multiply and add counted separately).
    pub gflops_mac2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub model: String,
    pub provenance: String,
    pub input: [usize; 5],
    pub rows: Vec<CostRow>,
    pub totals: CostTotals,
}

impl CostReport {
    pub fn from_rows(model: String, provenance: String, input: Shape5, rows: Vec<CostRow>) -> Self {
        let params = rows.iter().map(|r| r.params).sum();
        let macs: u64 = rows.iter().map(|r| r.macs).sum();
        let elementwise_ops = rows.iter().map(|r| r.elementwise_ops).sum();
        CostReport {
            model,
            provenance,
            input: input.0,
            rows,
            totals: CostTotals {
                params,
                macs,
                elementwise_ops,
                gflops_mac1: macs as f64 / 1e9,
                gflops_mac2: 2.0 * macs as f64 / 1e9,
            },
        }
    }

    /// Sum of rows whose path starts with `prefix`.
    pub fn params_under(&self, prefix: &str) -> u64 {
        self.rows
            .iter()
            .filter(|r| r.path.starts_with(prefix))
            .map(|r| r.params)
            .sum()
    }

    pub fn macs_under(&self, prefix: &str) -> u64 {
        self.rows
            .iter()
            .filter(|r| r.path.starts_with(prefix))
            .map(|r| r.macs)
            .sum()
    }

    /// Fixed-width text table followed by both FLOP conventions.
    pub fn render_table(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let width = self.rows.iter().map(|r| r.path.len()).max().unwrap_or(4).max(5);
        let _ = writeln!(s, "model: {}", self.model);
        let _ = writeln!(s, "note:  {}", self.provenance);
        let [n, c, t, h, w] = self.input;
        let _ = writeln!(s, "input: ({n}, {c}, {t}, {h}, {w})");
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<width$}  {:>10}  {:>14}  {:>14}  output",
            "layer", "params", "MACs", "elementwise"
        );
        for r in &self.rows {
            let [n, c, t, h, w] = r.output_shape;
            let shape = if n == 0 {
                "-".to_string()
            } else {
                format!("({n}, {c}, {t}, {h}, {w})")
            };
            let _ = writeln!(
                s,
                "{:<width$}  {:>10}  {:>14}  {:>14}  {shape}",
                r.path, r.params, r.macs, r.elementwise_ops
            );
        }
        let t = &self.totals;
        let _ = writeln!(s);
        let _ = writeln!(s, "total params:        {} ({:.3}M)", t.params, t.params as f64 / 1e6);
        let _ = writeln!(s, "total MACs:          {}", t.macs);
        let _ = writeln!(s, "elementwise ops:     {}", t.elementwise_ops);
        let _ = writeln!(s, "GFLOPs (1 FLOP/MAC): {:.3}", t.gflops_mac1);
        let _ = writeln!(s, "GFLOPs (2 FLOP/MAC): {:.3}", t.gflops_mac2);
        s
    }
}

/// Collects [`CostRow`]s while walking a model's structure.
#[derive(Debug, Default)]
pub struct CostSink {
    pub rows: Vec<CostRow>,
}

impl CostSink {
    pub fn conv(&mut self, path: &str, p: &ConvParams, input: Shape5) -> Result<Shape5> {
        let out = p.output_shape("cost", input)?;
        self.rows.push(CostRow {
            path: path.to_string(),
            params: p.param_count() as u64,
            macs: (out.numel() * p.taps()) as u64,
            elementwise_ops: 0,
            output_shape: out.0,
        });
        Ok(out)
    }

    pub fn ghost(&mut self, path: &str, g: &GhostParams, input: Shape5) -> Result<Shape5> {
        let prim = self.conv(&join(path, "primary"), &g.primary, input)?;
        if let Some(c) = &g.cheap {
            self.conv(&join(path, "cheap"), c, prim.with_c(c.c_in()))?;
        }
        Ok(prim.with_c(g.c_out()))
    }

    pub fn affine(&mut self, path: &str, a: &AffineParams, shape: Shape5) {
        self.rows.push(CostRow {
            path: path.to_string(),
            params: a.param_count() as u64,
            macs: 0,
            elementwise_ops: shape.numel() as u64,
            output_shape: shape.0,
        });
    }

    pub fn elementwise(&mut self, path: &str, count: usize) {
        self.rows.push(CostRow {
            path: path.to_string(),
            params: 0,
            macs: 0,
            elementwise_ops: count as u64,
            // no tensor of its own; rendered as "-"
            output_shape: [0; 5],
        });
    }

    /// A single stored scalar (blending coefficient).
    pub fn scalar(&mut self, path: &str) {
        self.rows.push(CostRow {
            path: path.to_string(),
            params: 1,
            macs: 0,
            elementwise_ops: 0,
            output_shape: [1, 1, 1, 1, 1],
        });
    }

    pub fn total_params(&self) -> u64 {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.rows.iter().map(|r| r.macs).sum()
    }
}
