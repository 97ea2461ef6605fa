//! Gradient descent and ADAM baselines.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::accounting::Metered;
use crate::kernels;
use crate::linesearch::{self, StepMode};
use crate::objective::Objective;
use crate::rng::{self, Stream};
use crate::trace::{self, Recorder, RowInput, RunOptions, Trace};

/// Full-batch gradient descent with Armijo or constant steps.
pub fn gd_run(obj: &dyn Objective, w0: &[f64], step: &StepMode, opts: &RunOptions) -> Trace {
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
    let mut iter = 0;
    let abort = loop {
        if trace::budget_exhausted(&opts.budget, &meter, iter, gnorm) {
            break None;
        }
        iter += 1;
        let p: Vec<f64> = g.iter().map(|v| -v).collect();
        let (w_new, alpha) = match step {
            StepMode::Constant(alpha) => {
                let mut w_new = w.clone();
                kernels::axpy(*alpha, &p, &mut w_new);
                (w_new, *alpha)
            }
            StepMode::Armijo(params) => match linesearch::armijo_backtrack(&meter, &w, &p, &g, f, params) {
                Ok(r) => (r.w_new, r.alpha),
                Err(e) => break Some(e.to_string()),
            },
        };
        w = w_new;
        match meter.value_and_gradient(&w) {
            Ok((fv, gv)) => {
                f = fv;
                g = gv;
            }
            Err(e) => break Some(e.to_string()),
        }
        gnorm = kernels::norm(&g);
        let row = RowInput { iter, grad_norm: gnorm, step: alpha, accepted: 0, sampled: 0 };
        if let Err(e) = rec.push(&w, row) {
            break Some(e);
        }
        if !f.is_finite() || !kernels::all_finite(&g) {
            break Some("non-finite objective or gradient".into());
        }
    };
    rec.finish(w, abort)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    pub batch_size: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            batch_size: 1,
        }
    }
}

/// Learning rates tried by [`adam_tuned_run`].
pub const ADAM_LR_GRID: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(d: usize) -> Self {
        Self { m: vec![0.0; d], v: vec![0.0; d], t: 0 }
    }

    /// One bias-corrected update of `w` in place.
    pub fn step(&mut self, w: &mut [f64], g: &[f64], cfg: &AdamConfig) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..w.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            w[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps_hat);
        }
    }
}

/// ADAM over shuffled mini-batches; a row is written after every pass and
/// whenever the budget stops a pass early. Monitoring is uncharged.
pub fn adam_run(obj: &dyn Objective, w0: &[f64], cfg: &AdamConfig, opts: &RunOptions, seed: u64) -> Trace {
    let meter = Metered::new(obj);
    let mut rec = Recorder::new(&meter, opts.wall_clock);
    let mut w = w0.to_vec();
    if cfg.batch_size == 0 {
        return rec.finish(w, Some("batch_size must be at least 1".into()));
    }
    let monitor = |w: &[f64]| -> Result<f64, String> {
        meter.inner().gradient(w).map(|g| kernels::norm(&g)).map_err(|e| e.to_string())
    };
    let mut gnorm = match monitor(&w) {
        Ok(n) => n,
        Err(e) => return rec.finish(w, Some(e)),
    };
    if let Err(e) = rec.push(&w, RowInput { iter: 0, grad_norm: gnorm, step: cfg.lr, accepted: 0, sampled: 0 }) {
        return rec.finish(w, Some(e));
    }
    let n = obj.num_samples();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle = rng::stream(seed, Stream::Shuffle);
    let mut state = AdamState::new(w.len());
    let budget = opts.budget;
    let out_of_budget = |meter: &Metered<'_>, t: u64| meter.epochs() >= budget.max_epochs - 1e-12 || t >= budget.max_iters;

    let abort = 'outer: loop {
        if gnorm <= budget.grad_tol || out_of_budget(&meter, state.t) {
            break None;
        }
        order.shuffle(&mut shuffle);
        for batch in order.chunks(cfg.batch_size) {
            let g = match meter.batch_gradient(&w, batch) {
                Ok(g) => g,
                Err(e) => break 'outer Some(e.to_string()),
            };
            state.step(&mut w, &g, cfg);
            if out_of_budget(&meter, state.t) {
                break;
            }
        }
        gnorm = match monitor(&w) {
            Ok(n) => n,
            Err(e) => break Some(e),
        };
        let row = RowInput { iter: state.t, grad_norm: gnorm, step: cfg.lr, accepted: 0, sampled: 0 };
        if let Err(e) = rec.push(&w, row) {
            break Some(e);
        }
    };
    rec.finish(w, abort)
}

/// Runs ADAM over [`ADAM_LR_GRID`] and keeps the run with the lowest final
/// loss; returns it with the chosen learning rate.
pub fn adam_tuned_run(obj: &dyn Objective, w0: &[f64], base: &AdamConfig, opts: &RunOptions, seed: u64) -> (Trace, f64) {
    let mut best: Option<(Trace, f64)> = None;
    for lr in ADAM_LR_GRID {
        let cfg = AdamConfig { lr, ..*base };
        let t = adam_run(obj, w0, &cfg, opts, seed);
        let loss = t.last().map_or(f64::INFINITY, |r| r.loss);
        let loss = if t.aborted.is_some() || !loss.is_finite() { f64::INFINITY } else { loss };
        let better = match &best {
            None => true,
            Some((b, _)) => {
                let bl = b.last().map_or(f64::INFINITY, |r| r.loss);
                let bl = if b.aborted.is_some() || !bl.is_finite() { f64::INFINITY } else { bl };
                loss < bl
            }
        };
        if better {
            best = Some((t, lr));
        }
    }
    best.expect("grid is non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::DenseMatrix;
    use crate::linesearch::LineSearchParams;
    use crate::objective::QuadraticObjective;
    use crate::trace::Budget;

    #[test]
    fn unit_step_solves_identity_quadratic() {
        let q = QuadraticObjective::new(DenseMatrix::identity(3), vec![1.0, -2.0, 0.5]).unwrap();
        let opts = RunOptions::with_budget(Budget { max_iters: 1, ..Default::default() });
        let t = gd_run(&q, &[4.0, 4.0, 4.0], &StepMode::Constant(1.0), &opts);
        assert_eq!(t.final_w, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn armijo_gd_decreases() {
        let q = QuadraticObjective::random(5, 50.0, 1).unwrap();
        let opts = RunOptions::with_budget(Budget { max_iters: 30, ..Default::default() });
        let t = gd_run(&q, &[1.0; 5], &StepMode::Armijo(LineSearchParams::default()), &opts);
        for pair in t.rows.windows(2) {
            assert!(pair[1].loss < pair[0].loss);
        }
    }

    #[test]
    fn divergent_constant_step_aborts() {
        let q = QuadraticObjective::new(DenseMatrix::from_diag(&[1.0, 10.0]), vec![0.0, 0.0]).unwrap();
        let opts = RunOptions::with_budget(Budget { max_iters: 10_000, max_epochs: 1e9, ..Default::default() });
        let t = gd_run(&q, &[1.0, 1.0], &StepMode::Constant(0.25), &opts);
        assert!(t.aborted.is_some());
        let finite: Vec<f64> = t.rows.iter().filter(|r| r.is_finite()).map(|r| r.grad_norm).collect();
        for pair in finite.windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut st = AdamState::new(2);
        let mut w = vec![0.0, 0.0];
        st.step(&mut w, &[1.0, -2.0], &AdamConfig::default());
        assert!((w[0] + 0.001).abs() < 1e-9);
        assert!((w[1] - 0.001).abs() < 1e-9);
        assert!(w.iter().all(|v| v.abs() <= 1e-3 * (1.0 + 1e-6)));
    }

    #[test]
    fn adam_on_zero_gradient_stays_put() {
        let q = QuadraticObjective::new(DenseMatrix::identity(2), vec![0.5, 0.5]).unwrap();
        let opts = RunOptions::with_budget(Budget { max_epochs: 5.0, grad_tol: -1.0, ..Default::default() });
        let t = adam_run(&q, &[0.5, 0.5], &AdamConfig::default(), &opts, 3);
        assert_eq!(t.final_w, vec![0.5, 0.5]);
    }
}
