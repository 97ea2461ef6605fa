//! Per-iteration run logs shared by every optimizer.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::accounting::{CallCounts, Metered};
use crate::objective::{Objective, ObjectiveError};

/// Exact CSV header of a trace file.
pub const TRACE_HEADER: &str =
    "iter,epochs,wall_ms,loss,train_acc,test_acc,grad_norm,step_or_delta,pairs_accepted,pairs_sampled";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: u64,
    pub epochs: f64,
    pub wall_ms: f64,
    pub loss: f64,
    pub train_acc: f64,
    /// `-1` without a test split.
    pub test_acc: f64,
    pub grad_norm: f64,
    /// Step length for line-search methods, trust-region radius otherwise.
    pub step_or_delta: f64,
    pub pairs_accepted: u64,
    pub pairs_sampled: u64,
}

impl TraceRow {
    pub fn is_finite(&self) -> bool {
        [
            self.epochs,
            self.wall_ms,
            self.loss,
            self.train_acc,
            self.test_acc,
            self.grad_norm,
            self.step_or_delta,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iter,
            self.epochs,
            self.wall_ms,
            self.loss,
            self.train_acc,
            self.test_acc,
            self.grad_norm,
            self.step_or_delta,
            self.pairs_accepted,
            self.pairs_sampled
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub max_epochs: f64,
    pub max_iters: u64,
    pub grad_tol: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_epochs: 100.0,
            max_iters: 100_000,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub budget: Budget,
    /// Fill `wall_ms`; off by default so traces are byte-reproducible.
    pub wall_clock: bool,
}

impl RunOptions {
    pub fn with_budget(budget: Budget) -> Self {
        Self {
            budget,
            wall_clock: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub final_w: Vec<f64>,
    /// Reason string when the run stopped abnormally.
    pub aborted: Option<String>,
    /// Per-iteration spectral-norm estimates of the curvature approximation
    /// (empty for methods without one).
    pub approx_norms: Vec<f64>,
    pub calls: CallCounts,
    pub epochs: f64,
}

impl Trace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Losses of successive rows.
    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv_line());
            out.push('\n');
        }
        out
    }

    /// Row reached within `epochs` (the last one whose cumulative epochs do
    /// not exceed it).
    pub fn at_epochs(&self, epochs: f64) -> Option<&TraceRow> {
        self.rows
            .iter()
            .take_while(|r| r.epochs <= epochs + 1e-12)
            .last()
            .or(self.rows.first())
    }
}

/// Builds trace rows from a metered objective; monitoring metrics are
/// evaluated on the inner objective and never charged.
pub(crate) struct Recorder<'m, 'a> {
    meter: &'m Metered<'a>,
    start: Instant,
    wall_clock: bool,
    rows: Vec<TraceRow>,
    approx_norms: Vec<f64>,
}

pub(crate) struct RowInput {
    pub iter: u64,
    pub grad_norm: f64,
    pub step: f64,
    pub accepted: usize,
    pub sampled: usize,
}

impl<'m, 'a> Recorder<'m, 'a> {
    pub fn new(meter: &'m Metered<'a>, wall_clock: bool) -> Self {
        Self {
            meter,
            start: Instant::now(),
            wall_clock,
            rows: Vec::new(),
            approx_norms: Vec::new(),
        }
    }

    pub fn push(&mut self, w: &[f64], input: RowInput) -> Result<(), String> {
        let report = self
            .meter
            .inner()
            .report(w)
            .map_err(|e: ObjectiveError| e.to_string())?;
        let row = TraceRow {
            iter: input.iter,
            epochs: self.meter.epochs(),
            wall_ms: if self.wall_clock {
                self.start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
            loss: report.loss,
            train_acc: report.train_acc,
            test_acc: report.test_acc.unwrap_or(-1.0),
            grad_norm: input.grad_norm,
            step_or_delta: input.step,
            pairs_accepted: input.accepted as u64,
            pairs_sampled: input.sampled as u64,
        };
        let finite = row.is_finite();
        self.rows.push(row);
        if finite {
            Ok(())
        } else {
            Err(format!("non-finite value in trace row {}", input.iter))
        }
    }

    pub fn push_norm(&mut self, norm: f64) {
        self.approx_norms.push(norm);
    }

    pub fn finish(self, final_w: Vec<f64>, aborted: Option<String>) -> Trace {
        let aborted = match (aborted, self.meter.audit()) {
            (Some(a), _) => Some(a),
            (None, Err(e)) => Some(e),
            (None, Ok(_)) => None,
        };
        Trace {
            rows: self.rows,
            final_w,
            aborted,
            approx_norms: self.approx_norms,
            calls: self.meter.counts(),
            epochs: self.meter.epochs(),
        }
    }
}

/// Why a run's main loop should stop before starting another iteration.
pub(crate) fn budget_exhausted(budget: &Budget, meter: &Metered<'_>, iter: u64, grad_norm: f64) -> bool {
    grad_norm <= budget.grad_tol || meter.epochs() >= budget.max_epochs || iter >= budget.max_iters
}

/// Runs the initial evaluation shared by every full-batch runner.
pub(crate) fn initial_point(
    meter: &Metered<'_>,
    w0: &[f64],
) -> Result<(f64, Vec<f64>), String> {
    let (f, g) = meter.value_and_gradient(w0).map_err(|e| e.to_string())?;
    if !f.is_finite() || !crate::kernels::all_finite(&g) {
        return Err("non-finite objective at the starting point".into());
    }
    Ok((f, g))
}

/// Evaluation used by runners that must treat failures as an abort reason.
pub(crate) fn eval_fg(obj: &dyn Objective, w: &[f64]) -> Result<(f64, Vec<f64>), String> {
    let (f, g) = obj.value_and_gradient(w).map_err(|e| e.to_string())?;
    if !f.is_finite() || !crate::kernels::all_finite(&g) {
        return Err("non-finite objective or gradient".into());
    }
    Ok((f, g))
}
