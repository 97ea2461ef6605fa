//! Trust-region machinery: the Steihaug-Toint CG subproblem solver, the
//! actual-to-predicted ratio, radius management, and the generic trust-region
//! loop shared by the SR1 family and the exact-Hessian Newton baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::Metered;
use crate::kernels;
use crate::objective::Objective;
use crate::trace::{self, Recorder, RowInput, RunOptions, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrustRegionError {
    #[error("model decrease {0:e} is too small to form a ratio")]
    DegenerateModel(f64),
    #[error("invalid trust-region parameters: {0}")]
    Params(String),
}

/// Stopping rule for the inner CG iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CgTolerance {
    /// Inexact-Newton forcing term `min(0.5, √‖g‖)`.
    Forcing,
    /// Fixed residual reduction factor.
    Relative(f64),
}

impl CgTolerance {
    pub fn rel_tol(&self, gnorm: f64) -> f64 {
        match *self {
            CgTolerance::Forcing => gnorm.sqrt().min(0.5),
            CgTolerance::Relative(t) => t,
        }
    }
}

impl Default for CgTolerance {
    fn default() -> Self {
        CgTolerance::Relative(1e-10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrustRegionParams {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub gamma1: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub delta0: f64,
    pub delta_max: f64,
    /// Runs stop once the radius falls below this.
    pub delta_min: f64,
    pub cg_tol: CgTolerance,
}

impl Default for TrustRegionParams {
    fn default() -> Self {
        Self {
            eta1: 1e-4,
            eta2: 0.75,
            eta3: 0.1,
            gamma1: 0.5,
            zeta1: 2.0,
            zeta2: 0.5,
            delta0: 1.0,
            delta_max: 1e6,
            delta_min: 1e-12,
            cg_tol: CgTolerance::default(),
        }
    }
}

impl TrustRegionParams {
    pub fn validate(&self) -> Result<(), TrustRegionError> {
        let bad = |msg: &str| Err(TrustRegionError::Params(msg.to_string()));
        if !(self.eta3 >= 0.0 && self.eta3 < self.eta2 && self.eta2 < 1.0) {
            return bad("need 0 <= eta3 < eta2 < 1");
        }
        if !(self.eta1 > 0.0 && self.eta1 < 1.0) {
            return bad("eta1 must lie in (0, 1)");
        }
        if !(self.gamma1 > 0.0 && self.gamma1 < 1.0) {
            return bad("gamma1 must lie in (0, 1)");
        }
        if !(self.zeta1 > 1.0) {
            return bad("zeta1 must exceed 1");
        }
        if !(self.zeta2 > 0.0 && self.zeta2 < 1.0) {
            return bad("zeta2 must lie in (0, 1)");
        }
        if !(self.delta0 > 0.0 && self.delta0 <= self.delta_max) {
            return bad("need 0 < delta0 <= delta_max");
        }
        if let CgTolerance::Relative(t) = self.cg_tol {
            if !(t > 0.0 && t < 1.0) {
                return bad("relative CG tolerance must lie in (0, 1)");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubproblemStatus {
    Interior,
    Boundary,
    NegativeCurvature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    pub p: Vec<f64>,
    /// `m(0) − m(p) = −gᵀp − ½ pᵀBp`.
    pub model_decrease: f64,
    pub status: SubproblemStatus,
    pub cg_iterations: usize,
}

/// Positive root `τ` of `‖z + τd‖ = Δ` for `‖z‖ ≤ Δ`.
fn boundary_root(z: &[f64], d: &[f64], delta: f64) -> f64 {
    let a = kernels::dot(d, d);
    let b = 2.0 * kernels::dot(z, d);
    let c = (kernels::dot(z, z) - delta * delta).min(0.0);
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    if b > 0.0 {
        -2.0 * c / (b + disc)
    } else {
        (disc - b) / (2.0 * a)
    }
}

fn finish(mut p: Vec<f64>, mut bp: Vec<f64>, g: &[f64], delta: f64, status: SubproblemStatus, iters: usize) -> SubproblemResult {
    let pn = kernels::norm(&p);
    if pn > delta {
        let s = delta / pn;
        p.iter_mut().for_each(|v| *v *= s);
        bp.iter_mut().for_each(|v| *v *= s);
    }
    let decrease = -(kernels::dot(g, &p) + 0.5 * kernels::dot(&p, &bp));
    SubproblemResult {
        p,
        model_decrease: decrease.max(0.0),
        status,
        cg_iterations: iters,
    }
}

/// Steihaug-Toint truncated CG for `min gᵀp + ½pᵀBp` s.t. `‖p‖ ≤ Δ`, with a
/// fallible product oracle.
pub fn try_steihaug_cg<F, E>(
    mut bv: F,
    g: &[f64],
    delta: f64,
    rel_tol: f64,
    max_iter: usize,
) -> Result<SubproblemResult, E>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
{
    assert!(delta > 0.0, "trust radius must be positive");
    let n = g.len();
    let mut z = vec![0.0; n];
    let mut bz = vec![0.0; n];
    let gnorm = kernels::norm(g);
    if gnorm == 0.0 {
        return Ok(finish(z, bz, g, delta, SubproblemStatus::Interior, 0));
    }
    let tol = rel_tol * gnorm;
    let mut r = g.to_vec();
    let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut rr = kernels::dot(&r, &r);
    for j in 0..max_iter.max(1) {
        let bd = bv(&dir)?;
        let dbd = kernels::dot(&dir, &bd);
        if dbd <= 0.0 {
            let tau = boundary_root(&z, &dir, delta);
            kernels::axpy(tau, &dir, &mut z);
            kernels::axpy(tau, &bd, &mut bz);
            return Ok(finish(z, bz, g, delta, SubproblemStatus::NegativeCurvature, j + 1));
        }
        let alpha = rr / dbd;
        let mut z_next = z.clone();
        kernels::axpy(alpha, &dir, &mut z_next);
        if kernels::norm(&z_next) >= delta {
            let tau = boundary_root(&z, &dir, delta);
            kernels::axpy(tau, &dir, &mut z);
            kernels::axpy(tau, &bd, &mut bz);
            return Ok(finish(z, bz, g, delta, SubproblemStatus::Boundary, j + 1));
        }
        z = z_next;
        kernels::axpy(alpha, &bd, &mut bz);
        kernels::axpy(alpha, &bd, &mut r);
        let rr_next = kernels::dot(&r, &r);
        if rr_next.sqrt() <= tol {
            return Ok(finish(z, bz, g, delta, SubproblemStatus::Interior, j + 1));
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for (d, r) in dir.iter_mut().zip(&r) {
            *d = -r + beta * *d;
        }
    }
    Ok(finish(z, bz, g, delta, SubproblemStatus::Interior, max_iter.max(1)))
}

/// Infallible-oracle form of [`try_steihaug_cg`].
pub fn steihaug_cg<F>(mut bv: F, g: &[f64], delta: f64, rel_tol: f64, max_iter: usize) -> SubproblemResult
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    match try_steihaug_cg::<_, std::convert::Infallible>(|v| Ok(bv(v)), g, delta, rel_tol, max_iter) {
        Ok(r) => r,
        Err(never) => match never {},
    }
}

pub fn rho(f_old: f64, f_trial: f64, model_decrease: f64) -> Result<f64, TrustRegionError> {
    if !(model_decrease > 1e-16) {
        return Err(TrustRegionError::DegenerateModel(model_decrease));
    }
    Ok((f_old - f_trial) / model_decrease)
}

pub fn adjust_tr(delta: f64, rho_val: f64, p_norm: f64, params: &TrustRegionParams) -> f64 {
    if rho_val > params.eta2 {
        if p_norm <= params.gamma1 * delta {
            delta
        } else {
            (params.zeta1 * delta).min(params.delta_max)
        }
    } else if rho_val >= params.eta3 {
        delta
    } else {
        params.zeta2 * delta
    }
}

/// Quadratic model source plugged into [`run_trust_region`].
pub(crate) trait TrModel {
    /// Called at the start of each outer iteration; returns
    /// `(pairs_accepted, pairs_sampled)` for the trace row.
    fn prepare(&mut self, meter: &Metered<'_>, w: &[f64], g: &[f64]) -> Result<(usize, usize), String>;

    fn product(&mut self, meter: &Metered<'_>, w: &[f64], v: &[f64]) -> Result<Vec<f64>, String>;

    /// Spectral-norm estimate of the current model matrix, if tracked.
    fn norm_probe(&mut self, _d: usize) -> Option<f64> {
        None
    }

    /// Sees the history pair of an accepted step.
    fn observe(&mut self, _s: Vec<f64>, _y: Vec<f64>) {}
}

/// Outer trust-region loop: solve, evaluate the trial point (one epoch),
/// accept when `ρ ≥ η₁`, adjust the radius.
pub(crate) fn run_trust_region<M: TrModel>(
    obj: &dyn Objective,
    w0: &[f64],
    params: &TrustRegionParams,
    opts: &RunOptions,
    model: &mut M,
) -> Trace {
    let meter = Metered::new(obj);
    let mut rec = Recorder::new(&meter, opts.wall_clock);
    let mut w = w0.to_vec();
    if let Err(e) = params.validate() {
        return rec.finish(w, Some(e.to_string()));
    }
    let (mut f, mut g) = match trace::initial_point(&meter, &w) {
        Ok(fg) => fg,
        Err(e) => return rec.finish(w, Some(e)),
    };
    let mut gnorm = kernels::norm(&g);
    let mut delta = params.delta0;
    if let Err(e) = rec.push(&w, RowInput { iter: 0, grad_norm: gnorm, step: delta, accepted: 0, sampled: 0 }) {
        return rec.finish(w, Some(e));
    }
    let d = w.len();
    let mut iter = 0;
    let abort = loop {
        if trace::budget_exhausted(&opts.budget, &meter, iter, gnorm) || delta < params.delta_min {
            break None;
        }
        iter += 1;
        let (accepted, sampled) = match model.prepare(&meter, &w, &g) {
            Ok(c) => c,
            Err(e) => break Some(e),
        };
        if let Some(n) = model.norm_probe(d) {
            rec.push_norm(n);
        }
        let rel_tol = params.cg_tol.rel_tol(gnorm);
        let sub = match try_steihaug_cg(|v| model.product(&meter, &w, v), &g, delta, rel_tol, d) {
            Ok(s) => s,
            Err(e) => break Some(e),
        };
        let p_norm = kernels::norm(&sub.p);
        let ratio = if sub.model_decrease > 1e-16 {
            let trial = kernels::add(&w, &sub.p);
            match meter.value(&trial) {
                Ok(ft) if ft.is_finite() => rho(f, ft, sub.model_decrease).unwrap_or(f64::NEG_INFINITY),
                _ => f64::NEG_INFINITY,
            }
        } else {
            f64::NEG_INFINITY
        };
        if ratio >= params.eta1 {
            let w_new = kernels::add(&w, &sub.p);
            let (f_new, g_new) = match trace::eval_fg(&meter, &w_new) {
                Ok(fg) => fg,
                Err(e) => break Some(e),
            };
            let y = kernels::sub(&g_new, &g);
            model.observe(sub.p, y);
            w = w_new;
            f = f_new;
            g = g_new;
            gnorm = kernels::norm(&g);
            delta = adjust_tr(delta, ratio, p_norm, params);
        } else {
            delta *= params.zeta2;
        }
        let row = RowInput { iter, grad_norm: gnorm, step: delta, accepted, sampled };
        if let Err(e) = rec.push(&w, row) {
            break Some(e);
        }
    };
    rec.finish(w, abort)
}

struct ExactHessian;

impl TrModel for ExactHessian {
    fn prepare(&mut self, _meter: &Metered<'_>, _w: &[f64], _g: &[f64]) -> Result<(usize, usize), String> {
        Ok((0, 0))
    }

    fn product(&mut self, meter: &Metered<'_>, w: &[f64], v: &[f64]) -> Result<Vec<f64>, String> {
        meter.hvp(w, v).map_err(|e| e.to_string())
    }
}

/// Trust-region Newton with CG on exact Hessian products (one epoch each).
pub fn newton_tr_run(obj: &dyn Objective, w0: &[f64], params: &TrustRegionParams, opts: &RunOptions) -> Trace {
    run_trust_region(obj, w0, params, opts, &mut ExactHessian)
}
