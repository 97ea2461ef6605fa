//! Fresh curvature pairs around the current iterate.
//!
//! For each of `m` Gaussian directions `σ` the displacement is
//! `s = w − (w + rσ) = −rσ`; the curvature vector is either a gradient
//! difference at the displaced point (Option I, one epoch per column) or an
//! exact Hessian product at `w` (Option II, one batched product for all
//! columns).

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels;
use crate::objective::{Objective, ObjectiveError};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PairOption {
    /// `y = ∇F(w) − ∇F(w + rσ)`
    #[serde(rename = "I", alias = "gradient-difference")]
    GradientDifference,
    /// `y = ∇²F(w) s`
    #[default]
    #[serde(rename = "II", alias = "hessian-product")]
    HessianProduct,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("memory m must be at least 1")]
    EmptyMemory,
    #[error("sampling radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("direction {column} was zero twice in a row")]
    DegenerateDirection { column: usize },
    #[error("evaluation failed at column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: ObjectiveError,
    },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// `m` displacement / curvature column pairs built at one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePairs {
    pub s: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub option: PairOption,
    pub radius: f64,
}

impl CurvaturePairs {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.s.iter().map(Vec::as_slice).zip(self.y.iter().map(Vec::as_slice))
    }

    /// Keeps only the columns listed in `keep` (in that order).
    pub fn select(&self, keep: &[usize]) -> CurvaturePairs {
        CurvaturePairs {
            s: keep.iter().map(|&i| self.s[i].clone()).collect(),
            y: keep.iter().map(|&i| self.y[i].clone()).collect(),
            option: self.option,
            radius: self.radius,
        }
    }
}

/// Computes `∇F(w)` and `m` pairs; the generator is seeded from `seed`.
pub fn sample_pairs(
    obj: &dyn Objective,
    w: &[f64],
    m: usize,
    radius: f64,
    option: PairOption,
    seed: u64,
) -> Result<(CurvaturePairs, Vec<f64>), SampleError> {
    let g = obj.gradient(w)?;
    let mut rng = rng::stream(seed, Stream::Sampling);
    let pairs = sample_pairs_at(obj, w, &g, m, radius, option, &mut rng)?;
    Ok((pairs, g))
}

/// Pair construction when `∇F(w)` is already known.
pub fn sample_pairs_at<R: Rng + ?Sized>(
    obj: &dyn Objective,
    w: &[f64],
    g: &[f64],
    m: usize,
    radius: f64,
    option: PairOption,
    rng: &mut R,
) -> Result<CurvaturePairs, SampleError> {
    if m == 0 {
        return Err(SampleError::EmptyMemory);
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(SampleError::BadRadius(radius));
    }
    let d = w.len();
    let mut s = Vec::with_capacity(m);
    for column in 0..m {
        let mut sigma = rng::normal_vec(rng, d);
        if sigma.iter().all(|&x| x == 0.0) {
            sigma = rng::normal_vec(rng, d);
            if sigma.iter().all(|&x| x == 0.0) {
                return Err(SampleError::DegenerateDirection { column });
            }
        }
        s.push(kernels::scale(-radius, &sigma));
    }

    let y = match option {
        PairOption::HessianProduct => obj.hvp_batch(w, &s)?,
        PairOption::GradientDifference => {
            let mut ys = Vec::with_capacity(m);
            for (column, sc) in s.iter().enumerate() {
                // w̄ = w − s = w + rσ
                let shifted = kernels::sub(w, sc);
                let g_bar = obj
                    .gradient(&shifted)
                    .map_err(|source| SampleError::Column { column, source })?;
                ys.push(kernels::sub(g, &g_bar));
            }
            ys
        }
    };
    if let Some(column) = y.iter().position(|c| !kernels::all_finite(c)) {
        return Err(SampleError::Column {
            column,
            source: ObjectiveError::NonFinite,
        });
    }
    Ok(CurvaturePairs {
        s,
        y,
        option,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::Metered;
    use crate::kernels::DenseMatrix;
    use crate::objective::QuadraticObjective;

    fn diag_quadratic() -> QuadraticObjective {
        QuadraticObjective::new(DenseMatrix::from_diag(&[2.0, 5.0]), vec![2.0, 5.0]).unwrap()
    }

    #[test]
    fn option_two_on_quadratic_is_a_times_s() {
        let q = diag_quadratic();
        let (pairs, g) =
            sample_pairs(&q, &[0.3, -0.7], 4, 1.0, PairOption::HessianProduct, 11).unwrap();
        assert_eq!(g, q.gradient(&[0.3, -0.7]).unwrap());
        for (s, y) in pairs.iter() {
            assert_eq!(y, &[2.0 * s[0], 5.0 * s[1]][..]);
        }
    }

    #[test]
    fn options_agree_on_quadratic() {
        let q = QuadraticObjective::random(7, 30.0, 2).unwrap();
        let w = vec![0.4; 7];
        let (p1, _) = sample_pairs(&q, &w, 5, 0.01, PairOption::GradientDifference, 9).unwrap();
        let (p2, _) = sample_pairs(&q, &w, 5, 0.01, PairOption::HessianProduct, 9).unwrap();
        assert_eq!(p1.s, p2.s);
        let worst = p1
            .y
            .iter()
            .zip(&p2.y)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12, "max column difference {worst:e}");
    }

    #[test]
    fn shape_and_epoch_accounting() {
        let q = diag_quadratic();
        let metered = Metered::new(&q);
        let (pairs, _) =
            sample_pairs(&metered, &[1.0, 1.0], 3, 1.0, PairOption::HessianProduct, 0).unwrap();
        assert_eq!(pairs.s.len(), 3);
        assert_eq!(pairs.y.len(), 3);
        assert_eq!(metered.epochs(), 2.0);

        let metered = Metered::new(&q);
        sample_pairs(&metered, &[1.0, 1.0], 3, 0.1, PairOption::GradientDifference, 0).unwrap();
        assert_eq!(metered.epochs(), 4.0);
    }

    #[test]
    fn deterministic_and_radius_scaled() {
        let q = QuadraticObjective::random(5, 10.0, 4).unwrap();
        let w = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        let (a, _) = sample_pairs(&q, &w, 4, 1.0, PairOption::HessianProduct, 5).unwrap();
        let (b, _) = sample_pairs(&q, &w, 4, 1.0, PairOption::HessianProduct, 5).unwrap();
        assert_eq!(a, b);
        let (c, _) = sample_pairs(&q, &w, 4, 3.0, PairOption::HessianProduct, 5).unwrap();
        for (col_a, col_c) in a.s.iter().zip(&c.s).chain(a.y.iter().zip(&c.y)) {
            let scaled = kernels::scale(3.0, col_a);
            let gap = kernels::norm(&kernels::sub(&scaled, col_c));
            assert!(gap <= 1e-13 * kernels::norm(col_c));
        }
    }

    #[test]
    fn invalid_arguments() {
        let q = diag_quadratic();
        assert_eq!(
            sample_pairs(&q, &[0.0, 0.0], 0, 1.0, PairOption::HessianProduct, 0).unwrap_err(),
            SampleError::EmptyMemory
        );
        assert!(matches!(
            sample_pairs(&q, &[0.0, 0.0], 2, 0.0, PairOption::HessianProduct, 0),
            Err(SampleError::BadRadius(_))
        ));
    }
}
