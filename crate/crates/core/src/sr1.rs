//! SR1 updates and their compact limited-memory form.
//!
//! The compact matrix is `B = γI + Ψ M⁻¹ Ψᵀ` with `Ψ = Y − γS` and
//! `M = D + L + Lᵀ − γSᵀS`. Products cost `O(k·d)` plus a `k×k` solve.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::accounting::Metered;
use crate::kernels::{self, DenseMatrix, LuFactors};
use crate::objective::{Objective, DENSE_GUARD};
use crate::rng::{self, RunRng, Stream};
use crate::sampler::{self, CurvaturePairs, PairOption};
use crate::trace::{RunOptions, Trace};
use crate::trust_region::{run_trust_region, TrModel, TrustRegionParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    /// `y − Bs` vanishes, so the secant already holds.
    SecantHolds,
    /// `|sᵀ(y − Bs)| < ε‖s‖‖y − Bs‖`.
    Cautious,
    /// Accepting the pair would make the middle matrix singular.
    SingularMiddle,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sr1Outcome {
    Updated(DenseMatrix),
    Skipped(SkipReason),
}

/// Cautious test shared by the dense and compact paths.
pub fn sr1_pair_check(s: &[f64], y: &[f64], bs: &[f64], eps: f64) -> Result<Vec<f64>, SkipReason> {
    let r = kernels::sub(y, bs);
    let rn = kernels::norm(&r);
    if rn <= 1e-12 * kernels::norm(y).max(1.0) {
        return Err(SkipReason::SecantHolds);
    }
    if kernels::dot(s, &r).abs() < eps * kernels::norm(s) * rn {
        return Err(SkipReason::Cautious);
    }
    Ok(r)
}

/// `B' = B + r rᵀ / (rᵀs)` with `r = y − Bs`, or a skip.
pub fn sr1_update_dense(b: &DenseMatrix, s: &[f64], y: &[f64], eps: f64) -> Sr1Outcome {
    assert!(eps > 0.0, "cautious epsilon must be positive");
    let bs = b.matvec(s);
    match sr1_pair_check(s, y, &bs, eps) {
        Err(reason) => Sr1Outcome::Skipped(reason),
        Ok(r) => {
            let mut out = b.clone();
            out.rank1_update(1.0 / kernels::dot(&r, s), &r, &r);
            out.symmetrize();
            Sr1Outcome::Updated(out)
        }
    }
}

/// Compact limited-memory SR1 matrix over accepted columns.
#[derive(Debug, Clone)]
pub struct Sr1Compact {
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    psi: Vec<Vec<f64>>,
    gamma: f64,
    middle: Option<LuFactors>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BuildReport {
    pub accepted: Vec<usize>,
    pub rejected: Vec<(usize, SkipReason)>,
}

impl Sr1Compact {
    /// `B = γI` with no pairs.
    pub fn scaled_identity(gamma: f64) -> Self {
        assert!(gamma > 0.0, "gamma must be positive");
        Self {
            s: Vec::new(),
            y: Vec::new(),
            psi: Vec::new(),
            gamma,
            middle: None,
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.s.iter().map(Vec::as_slice).zip(self.y.iter().map(Vec::as_slice))
    }

    /// `M = D + L + Lᵀ − γSᵀS`.
    fn middle_matrix(s: &[Vec<f64>], y: &[Vec<f64>], gamma: f64) -> DenseMatrix {
        let k = s.len();
        let mut m = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let v = kernels::dot(&s[i], &y[j]) - gamma * kernels::dot(&s[i], &s[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Applies `B` to `v`.
    pub fn hvp(&self, v: &[f64]) -> Vec<f64> {
        let mut out = kernels::scale(self.gamma, v);
        if let Some(lu) = &self.middle {
            let t: Vec<f64> = self.psi.iter().map(|p| kernels::dot(p, v)).collect();
            let c = lu.solve(&t);
            for (p, ci) in self.psi.iter().zip(c) {
                kernels::axpy(ci, p, &mut out);
            }
        }
        out
    }

    /// Dense `B` from products on unit vectors.
    pub fn to_dense(&self, d: usize) -> DenseMatrix {
        let mut cols = Vec::with_capacity(d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            cols.push(self.hvp(&e));
            e[j] = 0.0;
        }
        let mut b = DenseMatrix::from_columns(&cols).expect("columns share a length");
        b.symmetrize();
        b
    }

    /// Tries to append a pair after the cautious test against the current
    /// matrix; rebuilds and refactors the middle matrix on acceptance.
    pub fn try_push(&mut self, s: &[f64], y: &[f64], eps: f64) -> Result<(), SkipReason> {
        let bs = self.hvp(s);
        sr1_pair_check(s, y, &bs, eps)?;
        let mut s_new = self.s.clone();
        let mut y_new = self.y.clone();
        s_new.push(s.to_vec());
        y_new.push(y.to_vec());
        let m = Self::middle_matrix(&s_new, &y_new, self.gamma);
        let lu = LuFactors::factor(&m).map_err(|_| SkipReason::SingularMiddle)?;
        let mut psi = y.to_vec();
        kernels::axpy(-self.gamma, s, &mut psi);
        self.s = s_new;
        self.y = y_new;
        self.psi.push(psi);
        self.middle = Some(lu);
        Ok(())
    }
}

/// Builds the compact matrix by examining pairs in column order. With no
/// accepted pair the result is the identity.
pub fn build_compact<'p, I>(pairs: I, gamma: f64, eps: f64) -> (Sr1Compact, BuildReport)
where
    I: IntoIterator<Item = (&'p [f64], &'p [f64])>,
{
    assert!(eps > 0.0, "cautious epsilon must be positive");
    let mut compact = Sr1Compact::scaled_identity(gamma);
    let mut report = BuildReport::default();
    for (i, (s, y)) in pairs.into_iter().enumerate() {
        match compact.try_push(s, y, eps) {
            Ok(()) => report.accepted.push(i),
            Err(reason) => report.rejected.push((i, reason)),
        }
    }
    if compact.is_empty() {
        compact = Sr1Compact::scaled_identity(1.0);
    }
    (compact, report)
}

/// Compact matrix from sampled pairs.
pub fn build_compact_from(pairs: &CurvaturePairs, gamma: f64, eps: f64) -> (Sr1Compact, BuildReport) {
    build_compact(pairs.iter(), gamma, eps)
}

const NORM_PROBE_ITERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Slsr1Config {
    pub memory: usize,
    pub radius: f64,
    pub eps: f64,
    pub gamma: f64,
    pub option: PairOption,
    pub trust_region: TrustRegionParams,
}

impl Default for Slsr1Config {
    fn default() -> Self {
        Self {
            memory: 16,
            radius: 1.0,
            eps: 1e-8,
            gamma: 1.0,
            option: PairOption::HessianProduct,
            trust_region: TrustRegionParams::default(),
        }
    }
}

struct SampledModel<'c> {
    cfg: &'c Slsr1Config,
    rng: RunRng,
    probe_rng: RunRng,
    compact: Sr1Compact,
}

impl TrModel for SampledModel<'_> {
    fn prepare(&mut self, meter: &Metered<'_>, w: &[f64], g: &[f64]) -> Result<(usize, usize), String> {
        let cfg = self.cfg;
        let pairs = sampler::sample_pairs_at(meter, w, g, cfg.memory, cfg.radius, cfg.option, &mut self.rng)
            .map_err(|e| format!("pair sampling failed: {e}"))?;
        let (compact, report) = build_compact_from(&pairs, cfg.gamma, cfg.eps);
        self.compact = compact;
        Ok((report.accepted.len(), pairs.len()))
    }

    fn product(&mut self, _meter: &Metered<'_>, _w: &[f64], v: &[f64]) -> Result<Vec<f64>, String> {
        Ok(self.compact.hvp(v))
    }

    fn norm_probe(&mut self, d: usize) -> Option<f64> {
        let start = rng::normal_vec(&mut self.probe_rng, d);
        Some(kernels::spectral_norm_estimate(|v| self.compact.hvp(v), &start, NORM_PROBE_ITERS))
    }
}

/// Sampled LSR1: fresh pairs every iteration, compact model, Steihaug CG.
pub fn slsr1_run(obj: &dyn Objective, w0: &[f64], cfg: &Slsr1Config, opts: &RunOptions, seed: u64) -> Trace {
    let mut model = SampledModel {
        cfg,
        rng: rng::stream(seed, Stream::Sampling),
        probe_rng: rng::stream(seed, Stream::Probe),
        compact: Sr1Compact::scaled_identity(1.0),
    };
    run_trust_region(obj, w0, &cfg.trust_region, opts, &mut model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sr1Config {
    pub memory: usize,
    pub eps: f64,
    pub gamma: f64,
    pub trust_region: TrustRegionParams,
}

impl Default for Sr1Config {
    fn default() -> Self {
        Self {
            memory: 16,
            eps: 1e-8,
            gamma: 1.0,
            trust_region: TrustRegionParams::default(),
        }
    }
}

/// Full-history dense SR1 run, also recording iterates and pairs.
#[derive(Debug, Clone, Default)]
pub struct Sr1History {
    /// Iterate at the start of each outer iteration.
    pub iterates: Vec<Vec<f64>>,
    /// Number of history pairs produced before each outer iteration.
    pub pairs_before: Vec<usize>,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

struct DenseModel {
    b: DenseMatrix,
    eps: f64,
    accepted: usize,
    produced: usize,
    history: Option<Sr1History>,
}

impl TrModel for DenseModel {
    fn prepare(&mut self, _meter: &Metered<'_>, w: &[f64], _g: &[f64]) -> Result<(usize, usize), String> {
        if let Some(h) = &mut self.history {
            h.iterates.push(w.to_vec());
            h.pairs_before.push(h.pairs.len());
        }
        Ok((self.accepted, self.produced))
    }

    fn product(&mut self, _meter: &Metered<'_>, _w: &[f64], v: &[f64]) -> Result<Vec<f64>, String> {
        Ok(self.b.matvec(v))
    }

    fn observe(&mut self, s: Vec<f64>, y: Vec<f64>) {
        self.produced += 1;
        if let Sr1Outcome::Updated(b) = sr1_update_dense(&self.b, &s, &y, self.eps) {
            self.b = b;
            self.accepted += 1;
        }
        if let Some(h) = &mut self.history {
            h.pairs.push((s, y));
        }
    }
}

fn dense_guard(obj: &dyn Objective, w0: &[f64], opts: &RunOptions) -> Option<Trace> {
    let d = obj.dim();
    (d > DENSE_GUARD).then(|| {
        let meter = Metered::new(obj);
        crate::trace::Recorder::new(&meter, opts.wall_clock)
            .finish(w0.to_vec(), Some(format!("dense SR1 refuses d = {d} > {DENSE_GUARD}")))
    })
}

/// Classical dense SR1 trust-region method, `B₀ = I`.
pub fn classical_sr1_run(obj: &dyn Objective, w0: &[f64], cfg: &Sr1Config, opts: &RunOptions) -> Trace {
    sr1_trajectory(obj, w0, cfg, opts, false).0
}

/// Classical SR1 run that also returns its iterates and history pairs.
pub fn sr1_trajectory(obj: &dyn Objective, w0: &[f64], cfg: &Sr1Config, opts: &RunOptions, record: bool) -> (Trace, Sr1History) {
    if let Some(t) = dense_guard(obj, w0, opts) {
        return (t, Sr1History::default());
    }
    let mut model = DenseModel {
        b: DenseMatrix::identity(obj.dim()),
        eps: cfg.eps,
        accepted: 0,
        produced: 0,
        history: record.then(Sr1History::default),
    };
    let trace = run_trust_region(obj, w0, &cfg.trust_region, opts, &mut model);
    (trace, model.history.unwrap_or_default())
}

struct LimitedModel {
    memory: VecDeque<(Vec<f64>, Vec<f64>)>,
    capacity: usize,
    eps: f64,
    gamma: f64,
    compact: Sr1Compact,
    produced: usize,
}

impl LimitedModel {
    fn rebuild(&mut self) {
        self.compact = build_compact(self.memory.iter().map(|(s, y)| (s.as_slice(), y.as_slice())), self.gamma, self.eps).0;
    }
}

impl TrModel for LimitedModel {
    fn prepare(&mut self, _meter: &Metered<'_>, _w: &[f64], _g: &[f64]) -> Result<(usize, usize), String> {
        Ok((self.compact.len(), self.produced))
    }

    fn product(&mut self, _meter: &Metered<'_>, _w: &[f64], v: &[f64]) -> Result<Vec<f64>, String> {
        Ok(self.compact.hvp(v))
    }

    fn observe(&mut self, s: Vec<f64>, y: Vec<f64>) {
        self.produced += 1;
        let bs = self.compact.hvp(&s);
        if sr1_pair_check(&s, &y, &bs, self.eps).is_ok() {
            if self.memory.len() == self.capacity {
                self.memory.pop_front();
            }
            self.memory.push_back((s, y));
            self.rebuild();
        }
    }
}

/// Classical LSR1: compact model over the `m` most recent usable history
/// pairs, rebuilt after every accepted step.
pub fn classical_lsr1_run(obj: &dyn Objective, w0: &[f64], cfg: &Sr1Config, opts: &RunOptions) -> Trace {
    let mut model = LimitedModel {
        memory: VecDeque::with_capacity(cfg.memory.max(1)),
        capacity: cfg.memory.max(1),
        eps: cfg.eps,
        gamma: cfg.gamma,
        compact: Sr1Compact::scaled_identity(1.0),
        produced: 0,
    };
    run_trust_region(obj, w0, &cfg.trust_region, opts, &mut model)
}
