//! Eigenvalue spectra of SR1-type approximations along a classical SR1 run,
//! compared with the true Hessian.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::config::{ConfigError, ProblemId, RunConfig};
use crate::harness::experiment::{self, HarnessError};
use crate::kernels::{self, DenseMatrix, KernelError};
use crate::objective::{self, Objective, ObjectiveError, DENSE_GUARD};
use crate::rng::{self, Stream};
use crate::sampler::{self, PairOption, SampleError};
use crate::sr1::{self, Sr1Config, Sr1Outcome};
use crate::trace::{Budget, RunOptions};

pub const SPECTRUM_HEADER: &str = "checkpoint,source,index,eigenvalue";

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("dimension {d} exceeds the dense limit {DENSE_GUARD}")]
    TooLarge { d: usize },
    #[error("checkpoint {checkpoint} outside [0, {iterations})")]
    Checkpoint { checkpoint: usize, iterations: usize },
    #[error("SR1 run aborted: {0}")]
    Run(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    True,
    Sr1,
    Lsr1,
    Slsr1,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::True => "true",
            Source::Sr1 => "sr1",
            Source::Lsr1 => "lsr1",
            Source::Slsr1 => "slsr1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSnapshot {
    pub checkpoint: usize,
    pub true_eigs: Vec<f64>,
    pub sr1: Vec<f64>,
    pub lsr1: Vec<f64>,
    pub slsr1: Vec<f64>,
    /// History pairs the full-history SR1 matrix skipped.
    pub sr1_skipped: usize,
    pub lsr1_accepted: usize,
    pub slsr1_accepted: usize,
    /// No sampled pair survived and the S-LSR1 matrix is the identity.
    pub slsr1_fallback: bool,
}

impl SpectrumSnapshot {
    pub fn list(&self, source: Source) -> &[f64] {
        match source {
            Source::True => &self.true_eigs,
            Source::Sr1 => &self.sr1,
            Source::Lsr1 => &self.lsr1,
            Source::Slsr1 => &self.slsr1,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SPECTRUM_HEADER);
        out.push('\n');
        for src in [Source::True, Source::Sr1, Source::Lsr1, Source::Slsr1] {
            for (i, v) in self.list(src).iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", self.checkpoint, src.as_str(), i, v));
            }
        }
        out
    }
}

/// Mean absolute difference of two ascending lists, truncated to the shorter.
pub fn spectrum_match(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64
}

/// Three evenly spaced iterations in `[T/4, T)`.
pub fn default_checkpoints(iterations: usize) -> Vec<usize> {
    if iterations == 0 {
        return Vec::new();
    }
    let lo = iterations as f64 / 4.0;
    let hi = iterations as f64;
    let mut out: Vec<usize> = (0..3)
        .map(|i| ((lo + (hi - lo) * i as f64 / 2.0).round() as usize).min(iterations - 1))
        .collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumParams {
    pub iterations: usize,
    pub memory: usize,
    pub radius: f64,
    pub option: PairOption,
    pub seed: u64,
    pub sr1: Sr1Config,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            iterations: 40,
            memory: 16,
            radius: 0.01,
            option: PairOption::HessianProduct,
            seed: 0,
            sr1: Sr1Config::default(),
        }
    }
}

fn sorted_eigs(mut m: DenseMatrix) -> Result<Vec<f64>, KernelError> {
    m.symmetrize();
    Ok(kernels::sym_eig(&m)?.values)
}

/// Runs classical SR1 for `iterations` steps from `w0` and compares spectra at
/// each checkpoint.
pub fn spectrum_run(
    obj: &dyn Objective,
    w0: &[f64],
    params: &SpectrumParams,
    checkpoints: &[usize],
) -> Result<Vec<SpectrumSnapshot>, DiagnosticsError> {
    let d = obj.dim();
    if d > DENSE_GUARD {
        return Err(DiagnosticsError::TooLarge { d });
    }
    let t = params.iterations;
    if let Some(&c) = checkpoints.iter().find(|&&c| c >= t) {
        return Err(DiagnosticsError::Checkpoint { checkpoint: c, iterations: t });
    }
    let opts = RunOptions::with_budget(Budget { max_epochs: f64::INFINITY, max_iters: t as u64, grad_tol: 0.0 });
    let (trace, history) = sr1::sr1_trajectory(obj, w0, &params.sr1, &opts, true);
    if let Some(reason) = trace.aborted {
        return Err(DiagnosticsError::Run(reason));
    }
    let mut rng = rng::stream(params.seed, Stream::Sampling);
    let mut out = Vec::with_capacity(checkpoints.len());
    for &c in checkpoints {
        // a run that stopped early keeps its last iterate
        let (w, n_pairs) = match history.iterates.get(c) {
            Some(w) => (w.clone(), history.pairs_before[c]),
            None => (trace.final_w.clone(), history.pairs.len()),
        };
        let past = &history.pairs[..n_pairs];

        let true_eigs = sorted_eigs(objective::full_hessian(obj, &w)?)?;

        let mut b = DenseMatrix::identity(d);
        let mut sr1_skipped = 0;
        for (s, y) in past {
            match sr1::sr1_update_dense(&b, s, y, params.sr1.eps) {
                Sr1Outcome::Updated(next) => b = next,
                Sr1Outcome::Skipped(_) => sr1_skipped += 1,
            }
        }
        let sr1_eigs = sorted_eigs(b)?;

        let recent = &past[past.len().saturating_sub(params.memory)..];
        let (lsr1, lrep) = sr1::build_compact(
            recent.iter().map(|(s, y)| (s.as_slice(), y.as_slice())),
            params.sr1.gamma,
            params.sr1.eps,
        );
        let lsr1_eigs = sorted_eigs(lsr1.to_dense(d))?;

        let g = obj.gradient(&w)?;
        let pairs = sampler::sample_pairs_at(obj, &w, &g, params.memory, params.radius, params.option, &mut rng)?;
        let (slsr1, srep) = sr1::build_compact_from(&pairs, params.sr1.gamma, params.sr1.eps);
        let slsr1_eigs = sorted_eigs(slsr1.to_dense(d))?;

        out.push(SpectrumSnapshot {
            checkpoint: c,
            true_eigs,
            sr1: sr1_eigs,
            lsr1: lsr1_eigs,
            slsr1: slsr1_eigs,
            sr1_skipped,
            lsr1_accepted: lrep.accepted.len(),
            slsr1_accepted: srep.accepted.len(),
            slsr1_fallback: srep.accepted.is_empty(),
        });
    }
    Ok(out)
}

/// `spectrum --config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumConfig {
    pub problem: ProblemId,
    pub iterations: usize,
    pub memory: usize,
    pub radius: f64,
    pub option: PairOption,
    pub checkpoints: Option<Vec<usize>>,
    pub seed: u64,
    pub data_seed: u64,
    pub init_scale: f64,
    pub output_dir: PathBuf,
    pub sr1: Sr1Config,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            problem: ProblemId::Toy(crate::harness::config::ToySize::Small),
            iterations: 40,
            memory: 16,
            radius: 0.01,
            option: PairOption::HessianProduct,
            checkpoints: None,
            seed: 0,
            data_seed: 0,
            init_scale: 0.5,
            output_dir: PathBuf::from("spectrum"),
            sr1: Sr1Config::default(),
        }
    }
}

impl SpectrumConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let cfg: SpectrumConfig = serde_json::from_str(&text)?;
        if cfg.iterations == 0 || cfg.memory == 0 || !(cfg.radius > 0.0) {
            return Err(ConfigError::Invalid("iterations, memory and radius must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn params(&self) -> SpectrumParams {
        SpectrumParams {
            iterations: self.iterations,
            memory: self.memory,
            radius: self.radius,
            option: self.option,
            seed: self.seed,
            sr1: self.sr1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub checkpoint: usize,
    pub file: String,
    pub match_sr1: f64,
    pub match_lsr1: f64,
    pub match_slsr1: f64,
    pub sr1_skipped: usize,
    pub lsr1_accepted: usize,
    pub slsr1_accepted: usize,
    pub slsr1_fallback: bool,
}

#[derive(Debug, Error)]
pub enum SpectrumCommandError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// Builds the problem, runs the diagnostics and writes one CSV per
/// checkpoint plus `spectrum_summary.json`.
pub fn run_spectrum_command(cfg: &SpectrumConfig) -> Result<Vec<SpectrumReport>, SpectrumCommandError> {
    let mut rc = RunConfig::new(crate::harness::MethodId::Sr1, cfg.problem.clone(), vec![cfg.seed], &cfg.output_dir);
    rc.data_seed = cfg.data_seed;
    let problem = experiment::build_problem(&rc)?;
    let w0 = problem.initial_point(cfg.seed, cfg.init_scale);
    let checkpoints = cfg.checkpoints.clone().unwrap_or_else(|| default_checkpoints(cfg.iterations));
    let snaps = spectrum_run(problem.objective(), &w0, &cfg.params(), &checkpoints)?;
    let io = |path: &Path, source| HarnessError::Io { path: path.to_path_buf(), source };
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io(&cfg.output_dir, e))?;
    let mut reports = Vec::new();
    for s in &snaps {
        let file = format!("spectrum_checkpoint{}.csv", s.checkpoint);
        let path = cfg.output_dir.join(&file);
        std::fs::write(&path, s.to_csv()).map_err(|e| io(&path, e))?;
        reports.push(SpectrumReport {
            checkpoint: s.checkpoint,
            file,
            match_sr1: spectrum_match(&s.sr1, &s.true_eigs),
            match_lsr1: spectrum_match(&s.lsr1, &s.true_eigs),
            match_slsr1: spectrum_match(&s.slsr1, &s.true_eigs),
            sr1_skipped: s.sr1_skipped,
            lsr1_accepted: s.lsr1_accepted,
            slsr1_accepted: s.slsr1_accepted,
            slsr1_fallback: s.slsr1_fallback,
        });
    }
    let path = cfg.output_dir.join("spectrum_summary.json");
    let json = serde_json::to_string_pretty(&reports).expect("report serializes");
    std::fs::write(&path, json).map_err(|e| io(&path, e))?;
    Ok(reports)
}
