//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the oracles free of library samplers
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| gauss(rng)).collect()
}

pub fn eye(d: usize) -> Mat {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = b[0].len();
    a.iter()
        .map(|row| (0..n).map(|j| row.iter().enumerate().map(|(k, v)| v * b[k][j]).sum()).collect())
        .collect()
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    diff_norm(got, want) / norm(want).max(1e-300)
}

/// Random symmetric positive definite matrix `QᵀDQ`-style via `GᵀG + shift·I`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, shift: f64) -> Mat {
    let g: Mat = (0..d).map(|_| gauss_vec(rng, d)).collect();
    let mut a = matmul(&transpose(&g), &g);
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += shift;
    }
    a
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, d: usize) -> Mat {
    let mut a = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let v = gauss(rng);
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    a
}

/// Inverse BFGS update written as `(I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`.
pub fn bfgs_inverse_oracle(h: &Mat, s: &[f64], y: &[f64]) -> Mat {
    let d = s.len();
    let rho = 1.0 / dot(s, y);
    let left: Mat = (0..d).map(|i| (0..d).map(|j| eye(d)[i][j] - rho * s[i] * y[j]).collect()).collect();
    let right = transpose(&left);
    let mut out = matmul(&matmul(&left, h), &right);
    for i in 0..d {
        for j in 0..d {
            out[i][j] += rho * s[i] * s[j];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sr1Decision {
    Accept,
    Skip,
}

/// Sequential dense SR1 with the cautious and vanishing-residual skips.
pub fn sr1_dense_chain(d: usize, gamma: f64, pairs: &[(Vec<f64>, Vec<f64>)], eps: f64) -> (Mat, Vec<Sr1Decision>) {
    let mut b: Mat = eye(d).into_iter().map(|r| r.into_iter().map(|v| v * gamma).collect()).collect();
    let mut decisions = Vec::new();
    for (s, y) in pairs {
        let bs = matvec(&b, s);
        let r: Vec<f64> = y.iter().zip(&bs).map(|(a, c)| a - c).collect();
        let rn = norm(&r);
        if rn <= 1e-12 * norm(y).max(1.0) || dot(s, &r).abs() < eps * norm(s) * rn {
            decisions.push(Sr1Decision::Skip);
            continue;
        }
        let denom = dot(&r, s);
        for i in 0..d {
            for j in 0..d {
                b[i][j] += r[i] * r[j] / denom;
            }
        }
        decisions.push(Sr1Decision::Accept);
    }
    (b, decisions)
}

/// Determinant by cofactor expansion (small matrices only).
pub fn det_cofactor(a: &Mat) -> f64 {
    let n = a.len();
    if n == 1 {
        return a[0][0];
    }
    (0..n)
        .map(|j| {
            let minor: Mat = a[1..].iter().map(|r| r.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, v)| *v).collect()).collect();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * a[0][j] * det_cofactor(&minor)
        })
        .sum()
}
