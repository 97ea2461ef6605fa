//! Multi-seed experiment orchestration.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, MethodId, ProblemId, RunConfig};
use super::data::{self, DataError};
use crate::bfgs::{self, LbfgsConfig, SlbfgsConfig};
use crate::first_order;
use crate::objective::{self, MlpObjective, Objective, QuadraticObjective};
use crate::rng::{self, Stream};
use crate::sr1::{self, Slsr1Config, Sr1Config};
use crate::trace::{RunOptions, Trace, TraceRow};
use crate::trust_region;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("problem setup failed: {0}")]
    Objective(#[from] objective::ObjectiveError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Configuration and data problems are user errors; the rest are I/O.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::Data(_) | HarnessError::Objective(_))
    }
}

/// Problem instance plus how to draw a starting point for it.
pub enum Problem {
    Mlp(MlpObjective),
    Quadratic(QuadraticObjective),
}

impl Problem {
    pub fn objective(&self) -> &dyn Objective {
        match self {
            Problem::Mlp(m) => m,
            Problem::Quadratic(q) => q,
        }
    }

    /// Uniform `[-scale, scale]` start drawn from the seed's init stream.
    pub fn initial_point(&self, seed: u64, scale: f64) -> Vec<f64> {
        match self {
            Problem::Mlp(m) => objective::init_params(m.spec(), seed, scale),
            Problem::Quadratic(q) => rng::uniform_vec(&mut rng::stream(seed, Stream::Init), q.dim(), scale),
        }
    }
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem, HarnessError> {
    Ok(match &cfg.problem {
        ProblemId::Toy(size) => {
            let spec = data::build_network(size.network_name())?;
            Problem::Mlp(MlpObjective::new(spec, data::gen_toy_dataset(cfg.data_seed), None)?)
        }
        ProblemId::Csv(path) => {
            let o = &cfg.csv;
            let train = data::load_csv_dataset_with_classes(path, o.n_features, o.has_header, o.n_classes)?;
            let k = train.n_classes();
            let test = match &o.test_path {
                Some(p) => Some(data::load_csv_dataset_with_classes(p, o.n_features, o.has_header, Some(k))?),
                None => None,
            };
            let mut sizes = vec![o.n_features];
            sizes.extend(&o.hidden);
            sizes.push(k);
            Problem::Mlp(MlpObjective::new(objective::MlpSpec::new(sizes)?, train, test)?)
        }
        ProblemId::Quadratic(d) => Problem::Quadratic(QuadraticObjective::random(*d, cfg.hyper.condition, cfg.data_seed)?),
    })
}

/// Dispatches one seed to its method runner.
pub fn run_method(cfg: &RunConfig, obj: &dyn Objective, w0: &[f64], seed: u64) -> Trace {
    let h = &cfg.hyper;
    let opts = RunOptions { budget: cfg.budget, wall_clock: cfg.wall_clock };
    let sr1_cfg = Sr1Config { memory: h.memory, eps: h.eps, gamma: h.gamma, trust_region: h.trust_region };
    match cfg.method {
        MethodId::Gd => first_order::gd_run(obj, w0, &h.step, &opts),
        MethodId::Adam if h.tune_lr => first_order::adam_tuned_run(obj, w0, &h.adam, &opts, seed).0,
        MethodId::Adam => first_order::adam_run(obj, w0, &h.adam, &opts, seed),
        MethodId::Bfgs => bfgs::classical_bfgs_run(obj, w0, &h.line_search, &opts),
        MethodId::Lbfgs => {
            let c = LbfgsConfig { memory: h.memory, line_search: h.line_search, scaling: h.lbfgs_scaling };
            bfgs::classical_lbfgs_run(obj, w0, &c, &opts)
        }
        MethodId::Sr1 => sr1::classical_sr1_run(obj, w0, &sr1_cfg, &opts),
        MethodId::Lsr1 => sr1::classical_lsr1_run(obj, w0, &sr1_cfg, &opts),
        MethodId::SLbfgs => {
            let c = SlbfgsConfig { memory: h.memory, radius: h.radius, eps: h.eps, option: h.option, step: h.step };
            bfgs::slbfgs_run(obj, w0, &c, &opts, seed)
        }
        MethodId::SLsr1 => {
            let c = Slsr1Config {
                memory: h.memory,
                radius: h.radius,
                eps: h.eps,
                gamma: h.gamma,
                option: h.option,
                trust_region: h.trust_region,
            };
            sr1::slsr1_run(obj, w0, &c, &opts, seed)
        }
        MethodId::NewtonTrCg => trust_region::newton_tr_run(obj, w0, &h.trust_region, &opts),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    let pos = q * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    xs[lo] + (xs[hi] - xs[lo]) * (pos - lo as f64)
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut xs = values.to_vec();
        xs.sort_by(f64::total_cmp);
        Some(Self {
            min: xs[0],
            q25: quantile_sorted(&xs, 0.25),
            median: quantile_sorted(&xs, 0.5),
            q75: quantile_sorted(&xs, 0.75),
            max: xs[xs.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub epochs: f64,
    pub accuracy: Option<Quantiles>,
    pub loss: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_row: Option<TraceRow>,
    pub trace_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: MethodId,
    pub problem: String,
    pub seeds: Vec<u64>,
    pub checkpoints: Vec<f64>,
    pub finals: Vec<SeedResult>,
    pub quantiles: Vec<CheckpointStats>,
    pub aborts: Vec<Abort>,
}

impl Summary {
    pub fn all_aborted(&self) -> bool {
        self.aborts.len() == self.seeds.len()
    }
}

pub fn trace_file_name(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

pub const SUMMARY_FILE: &str = "summary.json";

fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

/// Per-seed traces in memory, seeds in config order.
pub fn run_seeds(cfg: &RunConfig, problem: &Problem) -> Vec<(u64, Trace)> {
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let w0 = problem.initial_point(seed, cfg.init_scale);
            (seed, run_method(cfg, problem.objective(), &w0, seed))
        })
        .collect()
}

pub fn summarize(cfg: &RunConfig, traces: &[(u64, Trace)]) -> Summary {
    let quantiles = cfg
        .checkpoints
        .iter()
        .map(|&epochs| {
            let rows: Vec<&TraceRow> = traces.iter().filter_map(|(_, t)| t.at_epochs(epochs)).collect();
            let acc: Vec<f64> = rows.iter().map(|r| r.train_acc).collect();
            let loss: Vec<f64> = rows.iter().map(|r| r.loss).collect();
            CheckpointStats { epochs, accuracy: Quantiles::of(&acc), loss: Quantiles::of(&loss) }
        })
        .collect();
    Summary {
        method: cfg.method,
        problem: cfg.problem.to_string(),
        seeds: cfg.seeds.clone(),
        checkpoints: cfg.checkpoints.clone(),
        finals: traces
            .iter()
            .map(|(seed, t)| SeedResult { seed: *seed, final_row: t.last().copied(), trace_file: trace_file_name(*seed) })
            .collect(),
        quantiles,
        aborts: traces
            .iter()
            .filter_map(|(seed, t)| t.aborted.as_ref().map(|r| Abort { seed: *seed, reason: r.clone() }))
            .collect(),
    }
}

/// Runs every seed, writes one trace per seed and `summary.json`.
pub fn run_experiment(cfg: &RunConfig) -> Result<Summary, HarnessError> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|source| HarnessError::Io { path: out.clone(), source })?;
    let traces = run_seeds(cfg, &problem);
    for (seed, t) in &traces {
        write_file(&out.join(trace_file_name(*seed)), t.to_csv().as_bytes())?;
    }
    let summary = summarize(cfg, &traces);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&out.join(SUMMARY_FILE), json.as_bytes())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Budget;

    #[test]
    fn quantiles_interpolate() {
        let q = Quantiles::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((q.min, q.q25, q.median, q.q75, q.max), (1.0, 1.75, 2.5, 3.25, 4.0));
        assert!(Quantiles::of(&[]).is_none());
    }

    #[test]
    fn three_seed_sweep_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(MethodId::SLsr1, "toy-small".parse().unwrap(), vec![1, 2, 3], dir.path());
        cfg.budget = Budget { max_epochs: 5.0, ..Default::default() };
        let s = run_experiment(&cfg).unwrap();
        assert_eq!(s.finals.len(), 3);
        for seed in [1, 2, 3] {
            assert!(dir.path().join(trace_file_name(seed)).exists());
        }
        assert!(dir.path().join(SUMMARY_FILE).exists());
    }

    #[test]
    fn zero_epoch_budget_writes_initial_row_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(MethodId::SLbfgs, "toy-small".parse().unwrap(), vec![7], dir.path());
        cfg.budget = Budget { max_epochs: 0.0, ..Default::default() };
        run_experiment(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.path().join(trace_file_name(7))).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn every_method_runs_on_quadratic() {
        let q = QuadraticObjective::random(6, 10.0, 0).unwrap();
        for m in MethodId::ALL {
            let mut cfg = RunConfig::new(m, ProblemId::Quadratic(6), vec![0], "unused");
            cfg.budget = Budget { max_epochs: 30.0, ..Default::default() };
            let t = run_method(&cfg, &q, &[1.0; 6], 0);
            assert!(t.aborted.is_none(), "{m}: {:?}", t.aborted);
            assert!(t.last().unwrap().loss < t.rows[0].loss, "{m} made no progress");
        }
    }
}
