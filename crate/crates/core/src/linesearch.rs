//! Backtracking Armijo line search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels;
use crate::objective::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearchParams {
    pub alpha0: f64,
    pub c1: f64,
    pub tau: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            c1: 1e-4,
            tau: 0.5,
            max_backtracks: 50,
        }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha0 > 0.0) {
            return Err(format!("alpha0 must be positive, got {}", self.alpha0));
        }
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(format!("c1 must lie in (0, 1), got {}", self.c1));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if self.max_backtracks < 1 {
            return Err("max_backtracks must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LineSearchError {
    #[error("direction is not a descent direction (gᵀp = {slope:e})")]
    NotDescent { slope: f64 },
    #[error("no step satisfied the sufficient-decrease condition after {trials} trials")]
    Exhausted { trials: usize },
    #[error("invalid line-search parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub f_new: f64,
    pub w_new: Vec<f64>,
    /// Function evaluations spent (one epoch each).
    pub trials: usize,
}

/// Tries `alpha0 · tauⁱ` for `i = 0..=max_backtracks` and returns the first
/// step with `F(w + αp) ≤ f0 + c1·α·gᵀp`. Non-finite or failed evaluations
/// count as rejected trials.
pub fn armijo_backtrack(
    obj: &dyn Objective,
    w: &[f64],
    p: &[f64],
    g: &[f64],
    f0: f64,
    params: &LineSearchParams,
) -> Result<LineSearchResult, LineSearchError> {
    params.validate().map_err(LineSearchError::Params)?;
    let slope = kernels::dot(g, p);
    if !(slope < 0.0) {
        return Err(LineSearchError::NotDescent { slope });
    }
    let mut alpha = params.alpha0;
    let mut trials = 0;
    for _ in 0..=params.max_backtracks {
        let mut trial = w.to_vec();
        kernels::axpy(alpha, p, &mut trial);
        trials += 1;
        if let Ok(f) = obj.value(&trial) {
            if f.is_finite() && f <= f0 + params.c1 * alpha * slope {
                return Ok(LineSearchResult {
                    alpha,
                    f_new: f,
                    w_new: trial,
                    trials,
                });
            }
        }
        alpha *= params.tau;
    }
    Err(LineSearchError::Exhausted { trials })
}

/// Step-length policy for line-search based runners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    Armijo(LineSearchParams),
    Constant(f64),
}

impl Default for StepMode {
    fn default() -> Self {
        StepMode::Armijo(LineSearchParams::default())
    }
}

/// Outcome of one step along `p` from `w`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Step {
    pub w_new: Vec<f64>,
    pub alpha: f64,
    /// True when the quasi-Newton direction failed and `-g` was used.
    pub fell_back: bool,
}

/// Applies the step policy. An Armijo failure along `p` is retried once along
/// `-g`; a second failure is returned as the abort reason.
pub(crate) fn take_step(
    obj: &dyn Objective,
    w: &[f64],
    p: &[f64],
    g: &[f64],
    f0: f64,
    mode: &StepMode,
) -> Result<Step, String> {
    match mode {
        StepMode::Constant(alpha) => {
            let mut w_new = w.to_vec();
            kernels::axpy(*alpha, p, &mut w_new);
            Ok(Step {
                w_new,
                alpha: *alpha,
                fell_back: false,
            })
        }
        StepMode::Armijo(params) => match armijo_backtrack(obj, w, p, g, f0, params) {
            Ok(r) => Ok(Step {
                w_new: r.w_new,
                alpha: r.alpha,
                fell_back: false,
            }),
            Err(LineSearchError::Params(e)) => Err(e),
            Err(first) => {
                let steepest: Vec<f64> = g.iter().map(|v| -v).collect();
                armijo_backtrack(obj, w, &steepest, g, f0, params)
                    .map(|r| Step {
                        w_new: r.w_new,
                        alpha: r.alpha,
                        fell_back: true,
                    })
                    .map_err(|second| {
                        format!("line search failed ({first}); steepest-descent retry failed ({second})")
                    })
            }
        },
    }
}
