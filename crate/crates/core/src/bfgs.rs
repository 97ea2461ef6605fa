//! BFGS-type methods: dense inverse updates, the limited-memory two-loop
//! recursion, the cautious curvature filter, and the classical (L)BFGS and
//! sampled S-LBFGS runners.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::Metered;
use crate::kernels::{self, DenseMatrix};
use crate::linesearch::{self, LineSearchParams, StepMode};
use crate::objective::{Objective, DENSE_GUARD};
use crate::rng::{self, Stream};
use crate::sampler::{self, CurvaturePairs, PairOption};
use crate::trace::{self, Recorder, RowInput, RunOptions, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BfgsError {
    #[error("curvature condition violated: sᵀy = {sy:e}")]
    CurvatureViolation { sy: f64 },
}

/// `H' = Vᵀ H V + ρ s sᵀ` with `ρ = 1 / yᵀs`, `V = I − ρ y sᵀ`.
pub fn bfgs_update_dense(h: &DenseMatrix, s: &[f64], y: &[f64]) -> Result<DenseMatrix, BfgsError> {
    let sy = kernels::dot(s, y);
    if !(sy > 1e-14 * kernels::norm(s) * kernels::norm(y)) {
        return Err(BfgsError::CurvatureViolation { sy });
    }
    let rho = 1.0 / sy;
    let hy = h.matvec(y);
    let yhy = kernels::dot(y, &hy);
    // Vᵀ H V = H − ρ (s (Hy)ᵀ + (Hy) sᵀ) + ρ² (yᵀHy) s sᵀ
    let mut out = h.clone();
    out.rank1_update(-rho, s, &hy);
    out.rank1_update(-rho, &hy, s);
    out.rank1_update(rho * rho * yhy + rho, s, s);
    out.symmetrize();
    Ok(out)
}

/// Accepted pairs plus the scaling of the implicit `H⁰ = γ₀ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsMemory {
    pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
    capacity: usize,
    pub gamma0: f64,
}

impl LbfgsMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "memory capacity must be positive");
        Self {
            pairs: VecDeque::with_capacity(capacity),
            capacity,
            gamma0: 1.0,
        }
    }

    pub fn from_pairs(pairs: &CurvaturePairs, gamma0: f64) -> Self {
        let mut mem = Self::new(pairs.len().max(1));
        for (s, y) in pairs.iter() {
            mem.push(s.to_vec(), y.to_vec());
        }
        mem.gamma0 = gamma0;
        mem
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Appends a pair, evicting the oldest when full. The caller guarantees
    /// `sᵀy > 0`.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        debug_assert!(kernels::dot(&s, &y) > 0.0);
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y));
    }

    pub fn newest(&self) -> Option<(&[f64], &[f64])> {
        self.pairs.back().map(|(s, y)| (s.as_slice(), y.as_slice()))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.pairs.iter().map(|(s, y)| (s.as_slice(), y.as_slice()))
    }

    /// `H g` via the two-loop recursion.
    pub fn two_loop(&self, g: &[f64]) -> Vec<f64> {
        let k = self.pairs.len();
        let mut q = g.to_vec();
        let mut alphas = vec![0.0; k];
        let mut rhos = vec![0.0; k];
        for (i, (s, y)) in self.pairs.iter().enumerate().rev() {
            rhos[i] = 1.0 / kernels::dot(s, y);
            alphas[i] = rhos[i] * kernels::dot(s, &q);
            kernels::axpy(-alphas[i], y, &mut q);
        }
        q.iter_mut().for_each(|v| *v *= self.gamma0);
        for (i, (s, y)) in self.pairs.iter().enumerate() {
            let beta = rhos[i] * kernels::dot(y, &q);
            kernels::axpy(alphas[i] - beta, s, &mut q);
        }
        q
    }

    /// Dense `H` obtained by applying the stored updates to `γ₀ I` in order.
    pub fn to_dense(&self, d: usize) -> DenseMatrix {
        let mut h = DenseMatrix::scaled_identity(d, self.gamma0);
        for (s, y) in self.pairs.iter() {
            h = bfgs_update_dense(&h, s, y).expect("stored pairs satisfy the curvature condition");
        }
        h
    }
}

/// Result of the cautious curvature filter.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureFilter {
    pub accepted: CurvaturePairs,
    pub accepted_idx: Vec<usize>,
    pub rejected: usize,
}

/// Keeps pairs with `sᵀy ≥ ε‖s‖²`, order preserved.
pub fn filter_pairs_curvature(pairs: &CurvaturePairs, eps: f64) -> CurvatureFilter {
    assert!(eps > 0.0, "cautious epsilon must be positive");
    let accepted_idx: Vec<usize> = pairs
        .iter()
        .enumerate()
        .filter(|(_, (s, y))| kernels::dot(s, y) >= eps * kernels::dot(s, s))
        .map(|(i, _)| i)
        .collect();
    CurvatureFilter {
        accepted: pairs.select(&accepted_idx),
        rejected: pairs.len() - accepted_idx.len(),
        accepted_idx,
    }
}

/// `γ₀ = sᵀy / yᵀy` of a uniformly drawn accepted pair.
pub fn random_gamma0<R: Rng + ?Sized>(pairs: &CurvaturePairs, rng: &mut R) -> f64 {
    if pairs.is_empty() {
        return 1.0;
    }
    let l = rng.random_range(0..pairs.len());
    kernels::dot(&pairs.s[l], &pairs.y[l]) / kernels::dot(&pairs.y[l], &pairs.y[l])
}

const NORM_PROBE_ITERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlbfgsConfig {
    pub memory: usize,
    pub radius: f64,
    pub eps: f64,
    pub option: PairOption,
    pub step: StepMode,
}

impl Default for SlbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 16,
            radius: 1.0,
            eps: 1e-8,
            option: PairOption::HessianProduct,
            step: StepMode::default(),
        }
    }
}

/// Sampled LBFGS: fresh pairs at every iterate, cautious filtering, random
/// initial scaling, steepest descent when no pair survives.
pub fn slbfgs_run(obj: &dyn Objective, w0: &[f64], cfg: &SlbfgsConfig, opts: &RunOptions, seed: u64) -> Trace {
    let meter = Metered::new(obj);
    let mut rec = Recorder::new(&meter, opts.wall_clock);
    let mut rng = rng::stream(seed, Stream::Sampling);
    let mut probe_rng = rng::stream(seed, Stream::Probe);
    let mut w = w0.to_vec();

    let (mut f, mut g) = match trace::initial_point(&meter, &w) {
        Ok(fg) => fg,
        Err(e) => return rec.finish(w, Some(e)),
    };
    let mut gnorm = kernels::norm(&g);
    if let Err(e) = rec.push(&w, RowInput { iter: 0, grad_norm: gnorm, step: 0.0, accepted: 0, sampled: 0 }) {
        return rec.finish(w, Some(e));
    }

    let mut iter = 0;
    let abort = loop {
        if trace::budget_exhausted(&opts.budget, &meter, iter, gnorm) {
            break None;
        }
        iter += 1;
        let pairs = match sampler::sample_pairs_at(&meter, &w, &g, cfg.memory, cfg.radius, cfg.option, &mut rng) {
            Ok(p) => p,
            Err(e) => break Some(format!("pair sampling failed: {e}")),
        };
        let filtered = filter_pairs_curvature(&pairs, cfg.eps);
        let accepted = filtered.accepted.len();
        let p: Vec<f64> = if accepted == 0 {
            rec.push_norm(1.0);
            g.iter().map(|v| -v).collect()
        } else {
            let gamma0 = random_gamma0(&filtered.accepted, &mut rng);
            let memory = LbfgsMemory::from_pairs(&filtered.accepted, gamma0);
            let start = rng::normal_vec(&mut probe_rng, w.len());
            rec.push_norm(kernels::spectral_norm_estimate(|v| memory.two_loop(v), &start, NORM_PROBE_ITERS));
            memory.two_loop(&g).iter().map(|v| -v).collect()
        };
        let step = match linesearch::take_step(&meter, &w, &p, &g, f, &cfg.step) {
            Ok(s) => s,
            Err(e) => break Some(e),
        };
        w = step.w_new;
        match trace::eval_fg(&meter, &w) {
            Ok((fv, gv)) => {
                f = fv;
                g = gv;
            }
            Err(e) => break Some(e),
        }
        gnorm = kernels::norm(&g);
        let row = RowInput { iter, grad_norm: gnorm, step: step.alpha, accepted, sampled: pairs.len() };
        if let Err(e) = rec.push(&w, row) {
            break Some(e);
        }
    };
    rec.finish(w, abort)
}

/// How classical LBFGS scales `H⁰` each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialScaling {
    /// `γ₀ = sᵀy / yᵀy` of the newest stored pair.
    #[default]
    LatestPair,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub line_search: LineSearchParams,
    pub scaling: InitialScaling,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 16,
            line_search: LineSearchParams::default(),
            scaling: InitialScaling::LatestPair,
        }
    }
}

fn history_pair_ok(s: &[f64], y: &[f64]) -> bool {
    kernels::dot(s, y) > 1e-14 * kernels::norm(s) * kernels::norm(y)
}

/// Classical LBFGS with pairs from successive iterates.
pub fn classical_lbfgs_run(obj: &dyn Objective, w0: &[f64], cfg: &LbfgsConfig, opts: &RunOptions) -> Trace {
    let mut memory = LbfgsMemory::new(cfg.memory.max(1));
    let scaling = cfg.scaling;
    quasi_newton_history_run(obj, w0, &cfg.line_search, opts, move |event| match event {
        HistoryEvent::Direction(g) => {
            memory.gamma0 = match (scaling, memory.newest()) {
                (InitialScaling::LatestPair, Some((s, y))) => kernels::dot(s, y) / kernels::dot(y, y),
                _ => 1.0,
            };
            HistoryReply::Direction(memory.two_loop(g))
        }
        HistoryEvent::Pair(s, y) => {
            let ok = history_pair_ok(&s, &y);
            if ok {
                memory.push(s, y);
            }
            HistoryReply::Pair(ok)
        }
    })
}

/// Classical dense BFGS, `H₀ = I`.
pub fn classical_bfgs_run(obj: &dyn Objective, w0: &[f64], line_search: &LineSearchParams, opts: &RunOptions) -> Trace {
    let d = obj.dim();
    if d > DENSE_GUARD {
        let meter = Metered::new(obj);
        let rec = Recorder::new(&meter, opts.wall_clock);
        return rec.finish(w0.to_vec(), Some(format!("dense BFGS refuses d = {d} > {DENSE_GUARD}")));
    }
    let mut h = DenseMatrix::identity(d);
    quasi_newton_history_run(obj, w0, line_search, opts, move |event| match event {
        HistoryEvent::Direction(g) => HistoryReply::Direction(h.matvec(g)),
        HistoryEvent::Pair(s, y) => match bfgs_update_dense(&h, &s, &y) {
            Ok(next) => {
                h = next;
                HistoryReply::Pair(true)
            }
            Err(_) => HistoryReply::Pair(false),
        },
    })
}

pub(crate) enum HistoryEvent<'a> {
    Direction(&'a [f64]),
    Pair(Vec<f64>, Vec<f64>),
}

pub(crate) enum HistoryReply {
    Direction(Vec<f64>),
    /// Whether the pair was stored.
    Pair(bool),
}

/// Line-search loop shared by BFGS and LBFGS; `update` owns the inverse
/// Hessian approximation.
fn quasi_newton_history_run<F>(
    obj: &dyn Objective,
    w0: &[f64],
    line_search: &LineSearchParams,
    opts: &RunOptions,
    mut update: F,
) -> Trace
where
    F: FnMut(HistoryEvent<'_>) -> HistoryReply,
{
    let meter = Metered::new(obj);
    let mut rec = Recorder::new(&meter, opts.wall_clock);
    let mut w = w0.to_vec();
    let (mut f, mut g) = match trace::initial_point(&meter, &w) {
        Ok(fg) => fg,
        Err(e) => return rec.finish(w, Some(e)),
    };
    let mut gnorm = kernels::norm(&g);
    if let Err(e) = rec.push(&w, RowInput { iter: 0, grad_norm: gnorm, step: 0.0, accepted: 0, sampled: 0 }) {
        return rec.finish(w, Some(e));
    }
    let mode = StepMode::Armijo(*line_search);
    let mut iter = 0;
    let abort = loop {
        if trace::budget_exhausted(&opts.budget, &meter, iter, gnorm) {
            break None;
        }
        iter += 1;
        let HistoryReply::Direction(hg) = update(HistoryEvent::Direction(&g)) else {
            unreachable!()
        };
        let p: Vec<f64> = hg.iter().map(|v| -v).collect();
        let step = match linesearch::take_step(&meter, &w, &p, &g, f, &mode) {
            Ok(s) => s,
            Err(e) => break Some(e),
        };
        let (f_new, g_new) = match trace::eval_fg(&meter, &step.w_new) {
            Ok(fg) => fg,
            Err(e) => break Some(e),
        };
        let s = kernels::sub(&step.w_new, &w);
        let y = kernels::sub(&g_new, &g);
        let HistoryReply::Pair(ok) = update(HistoryEvent::Pair(s, y)) else {
            unreachable!()
        };
        w = step.w_new;
        f = f_new;
        g = g_new;
        gnorm = kernels::norm(&g);
        let row = RowInput { iter, grad_norm: gnorm, step: step.alpha, accepted: ok as usize, sampled: 1 };
        if let Err(e) = rec.push(&w, row) {
            break Some(e);
        }
    };
    rec.finish(w, abort)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::QuadraticObjective;

    #[test]
    fn dense_update_hand_example() {
        let h = DenseMatrix::scaled_identity(2, 0.5);
        let h2 = bfgs_update_dense(&h, &[1.0, 0.0], &[2.0, 0.0]).unwrap();
        assert_eq!(h2, DenseMatrix::scaled_identity(2, 0.5));
        assert_eq!(h2.matvec(&[2.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn dense_update_rejects_negative_curvature() {
        let h = DenseMatrix::identity(2);
        assert!(matches!(
            bfgs_update_dense(&h, &[1.0, 0.0], &[-1.0, 0.0]),
            Err(BfgsError::CurvatureViolation { .. })
        ));
    }

    #[test]
    fn two_loop_empty_memory_scales() {
        let mut mem = LbfgsMemory::new(3);
        mem.gamma0 = 0.25;
        assert_eq!(mem.two_loop(&[4.0, -8.0]), vec![1.0, -2.0]);
    }

    #[test]
    fn two_loop_single_pair() {
        let mut mem = LbfgsMemory::new(3);
        mem.push(vec![1.0, 0.0], vec![2.0, 0.0]);
        mem.gamma0 = 0.5;
        assert_eq!(mem.two_loop(&[4.0, 0.0]), vec![2.0, 0.0]);
    }

    #[test]
    fn memory_evicts_oldest() {
        let mut mem = LbfgsMemory::new(2);
        mem.push(vec![1.0], vec![1.0]);
        mem.push(vec![2.0], vec![1.0]);
        mem.push(vec![3.0], vec![1.0]);
        let s: Vec<f64> = mem.pairs().map(|(s, _)| s[0]).collect();
        assert_eq!(s, vec![2.0, 3.0]);
    }

    #[test]
    fn filter_examples() {
        let pairs = CurvaturePairs {
            s: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            y: vec![vec![2.0, 0.0], vec![-1.0, 0.0]],
            option: PairOption::HessianProduct,
            radius: 1.0,
        };
        let f = filter_pairs_curvature(&pairs, 1e-8);
        assert_eq!(f.accepted_idx, vec![0]);
        assert_eq!(f.rejected, 1);
    }

    #[test]
    fn quadratic_option_two_pairs_all_accepted() {
        let q = QuadraticObjective::random(8, 20.0, 5).unwrap();
        let (pairs, _) = sampler::sample_pairs(&q, &[0.2; 8], 8, 1.0, PairOption::HessianProduct, 3).unwrap();
        for (s, y) in pairs.iter() {
            assert!(kernels::dot(s, y) >= q.lambda_min() * kernels::dot(s, s) * (1.0 - 1e-12));
        }
        assert_eq!(filter_pairs_curvature(&pairs, 1e-8).rejected, 0);
    }

    #[test]
    fn first_classical_step_is_steepest_descent() {
        let q = QuadraticObjective::new(DenseMatrix::from_diag(&[1.0, 3.0]), vec![0.0, 0.0]).unwrap();
        let opts = RunOptions::with_budget(crate::trace::Budget { max_iters: 1, ..Default::default() });
        let t = classical_bfgs_run(&q, &[1.0, 1.0], &LineSearchParams::default(), &opts);
        // p = -g = (-1, -3); the unit step overshoots, α = 0.5 is accepted
        let alpha = t.rows[1].step_or_delta;
        let expected = [1.0 - alpha, 1.0 - 3.0 * alpha];
        assert_eq!(t.final_w, expected.to_vec());
    }
}
