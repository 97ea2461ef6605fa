//! JSON run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bfgs::InitialScaling;
use crate::first_order::AdamConfig;
use crate::linesearch::{LineSearchParams, StepMode};
use crate::sampler::PairOption;
use crate::trace::Budget;
use crate::trust_region::TrustRegionParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodId {
    Gd,
    Adam,
    Bfgs,
    Lbfgs,
    Sr1,
    Lsr1,
    SLbfgs,
    SLsr1,
    NewtonTrCg,
}

impl MethodId {
    pub const ALL: [MethodId; 9] = [
        MethodId::Gd,
        MethodId::Adam,
        MethodId::Bfgs,
        MethodId::Lbfgs,
        MethodId::Sr1,
        MethodId::Lsr1,
        MethodId::SLbfgs,
        MethodId::SLsr1,
        MethodId::NewtonTrCg,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodId::Gd => "gd",
            MethodId::Adam => "adam",
            MethodId::Bfgs => "bfgs",
            MethodId::Lbfgs => "lbfgs",
            MethodId::Sr1 => "sr1",
            MethodId::Lsr1 => "lsr1",
            MethodId::SLbfgs => "s-lbfgs",
            MethodId::SLsr1 => "s-lsr1",
            MethodId::NewtonTrCg => "newton-tr-cg",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToySize {
    Small,
    Medium,
    Large,
}

impl ToySize {
    pub fn network_name(&self) -> &'static str {
        match self {
            ToySize::Small => "small",
            ToySize::Medium => "medium",
            ToySize::Large => "large",
        }
    }
}

/// `toy-small | toy-medium | toy-large | csv:<path> | quadratic:<d>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProblemId {
    Toy(ToySize),
    Csv(PathBuf),
    Quadratic(usize),
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemId::Toy(s) => write!(f, "toy-{}", s.network_name()),
            ProblemId::Csv(p) => write!(f, "csv:{}", p.display()),
            ProblemId::Quadratic(d) => write!(f, "quadratic:{d}"),
        }
    }
}

impl FromStr for ProblemId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy-small" => return Ok(ProblemId::Toy(ToySize::Small)),
            "toy-medium" => return Ok(ProblemId::Toy(ToySize::Medium)),
            "toy-large" => return Ok(ProblemId::Toy(ToySize::Large)),
            _ => {}
        }
        if let Some(path) = s.strip_prefix("csv:") {
            if path.is_empty() {
                return Err(ConfigError::Invalid("csv problem needs a path".into()));
            }
            return Ok(ProblemId::Csv(PathBuf::from(path)));
        }
        if let Some(d) = s.strip_prefix("quadratic:") {
            return match d.parse::<usize>() {
                Ok(d) if d > 0 => Ok(ProblemId::Quadratic(d)),
                _ => Err(ConfigError::Invalid(format!("bad quadratic dimension '{d}'"))),
            };
        }
        Err(ConfigError::Invalid(format!("unknown problem '{s}'")))
    }
}

impl TryFrom<String> for ProblemId {
    type Error = ConfigError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ProblemId> for String {
    fn from(p: ProblemId) -> Self {
        p.to_string()
    }
}

/// Options for `csv:<path>` problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub n_features: usize,
    pub has_header: bool,
    pub n_classes: Option<usize>,
    pub test_path: Option<PathBuf>,
    /// Hidden-layer widths of the MLP.
    pub hidden: Vec<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            n_features: 2,
            has_header: true,
            n_classes: None,
            test_path: None,
            hidden: vec![10, 10],
        }
    }
}

/// Hyperparameters; each method reads the fields it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub memory: usize,
    pub radius: f64,
    pub eps: f64,
    pub gamma: f64,
    pub option: PairOption,
    /// Step policy of GD and S-LBFGS.
    pub step: StepMode,
    /// Line search of BFGS and LBFGS.
    pub line_search: LineSearchParams,
    pub lbfgs_scaling: InitialScaling,
    pub trust_region: TrustRegionParams,
    pub adam: AdamConfig,
    /// Pick the best ADAM learning rate from the fixed grid per seed.
    pub tune_lr: bool,
    /// Condition number of `quadratic:<d>` problems.
    pub condition: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            memory: 16,
            radius: 1.0,
            eps: 1e-8,
            gamma: 1.0,
            option: PairOption::HessianProduct,
            step: StepMode::default(),
            line_search: LineSearchParams::default(),
            lbfgs_scaling: InitialScaling::default(),
            trust_region: TrustRegionParams::default(),
            adam: AdamConfig::default(),
            tune_lr: false,
            condition: 100.0,
        }
    }
}

fn default_checkpoints() -> Vec<f64> {
    vec![10.0, 25.0, 50.0, 100.0]
}

fn default_init_scale() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: MethodId,
    pub problem: ProblemId,
    #[serde(default)]
    pub hyper: Hyper,
    #[serde(default)]
    pub budget: Budget,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Epoch budgets at which accuracy quantiles are reported.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<f64>,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    /// Seed of generated data (toy points, random quadratics).
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub csv: CsvOptions,
    /// Record wall-clock time in traces (breaks byte reproducibility).
    #[serde(default)]
    pub wall_clock: bool,
}

impl RunConfig {
    pub fn new(method: MethodId, problem: ProblemId, seeds: Vec<u64>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            method,
            problem,
            hyper: Hyper::default(),
            budget: Budget::default(),
            seeds,
            output_dir: output_dir.into(),
            checkpoints: default_checkpoints(),
            init_scale: default_init_scale(),
            data_seed: 0,
            csv: CsvOptions::default(),
            wall_clock: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        let b = &self.budget;
        if !(b.max_epochs >= 0.0) || b.grad_tol.is_nan() {
            return bad("budget must be non-negative".into());
        }
        if self.checkpoints.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return bad("checkpoints must be finite and non-negative".into());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be non-negative".into());
        }
        let h = &self.hyper;
        if h.memory == 0 {
            return bad("memory must be at least 1".into());
        }
        if !(h.radius > 0.0 && h.radius.is_finite()) {
            return bad("radius must be positive".into());
        }
        if !(h.eps > 0.0) || !(h.gamma > 0.0) {
            return bad("eps and gamma must be positive".into());
        }
        if !(h.condition >= 1.0) {
            return bad("condition must be at least 1".into());
        }
        if h.adam.batch_size == 0 || !(h.adam.lr > 0.0) {
            return bad("ADAM needs batch_size >= 1 and lr > 0".into());
        }
        h.line_search.validate().map_err(ConfigError::Invalid)?;
        match h.step {
            StepMode::Armijo(p) => p.validate().map_err(ConfigError::Invalid)?,
            StepMode::Constant(a) if !(a > 0.0) => return bad("constant step must be positive".into()),
            StepMode::Constant(_) => {}
        }
        h.trust_region.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let ProblemId::Csv(_) = self.problem {
            if self.csv.n_features == 0 {
                return bad("csv.n_features must be positive".into());
            }
        }
        Ok(())
    }
}
