//! Property tests over randomly generated instances.

mod common;

use common::*;
use proptest::prelude::*;
use sampled_qn::accounting::Metered;
use sampled_qn::bfgs::{self, LbfgsMemory};
use sampled_qn::diagnostics::spectrum_match;
use sampled_qn::first_order::{AdamConfig, AdamState};
use sampled_qn::harness::experiment::Quantiles;
use sampled_qn::kernels::DenseMatrix;
use sampled_qn::objective::{Objective, QuadraticObjective};
use sampled_qn::sr1;
use sampled_qn::trust_region::{self, TrustRegionParams};

fn instance(seed: u64, d: usize, m: usize) -> (Mat, Vec<(Vec<f64>, Vec<f64>)>) {
    let mut r = rng(seed);
    let a = random_spd(&mut r, d, 0.2);
    let pairs = (0..m)
        .map(|_| {
            let s = gauss_vec(&mut r, d);
            let y = matvec(&a, &s);
            (s, y)
        })
        .collect();
    (a, pairs)
}

fn memory(pairs: &[(Vec<f64>, Vec<f64>)], gamma0: f64) -> LbfgsMemory {
    let mut mem = LbfgsMemory::new(pairs.len());
    mem.gamma0 = gamma0;
    for (s, y) in pairs {
        mem.push(s.clone(), y.clone());
    }
    mem
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn two_loop_is_the_dense_inverse(seed in any::<u64>(), d in 1usize..15, m in 1usize..8, gamma0 in 0.05f64..5.0) {
        let (_, pairs) = instance(seed, d, m);
        let mem = memory(&pairs, gamma0);
        let h = mem.to_dense(d);
        let v = gauss_vec(&mut rng(seed ^ 1), d);
        prop_assert!(rel_err(&mem.two_loop(&v), &h.matvec(&v)) <= 1e-10);
        prop_assert!(h.asymmetry() <= 1e-10 * h.max_abs().max(1.0));
    }

    #[test]
    fn lbfgs_satisfies_newest_secant(seed in any::<u64>(), d in 1usize..15, m in 1usize..8) {
        let (_, pairs) = instance(seed, d, m);
        let mem = memory(&pairs, 1.0);
        let (s, y) = pairs.last().unwrap();
        prop_assert!(rel_err(&mem.two_loop(y), s) <= 1e-9);
    }

    #[test]
    fn steihaug_step_stays_inside(seed in any::<u64>(), d in 1usize..12, log_delta in -3f64..3.0) {
        let mut r = rng(seed);
        let b = DenseMatrix::from_rows(&random_symmetric(&mut r, d)).unwrap();
        let g = gauss_vec(&mut r, d);
        let delta = 10f64.powf(log_delta);
        let res = trust_region::steihaug_cg(|v| b.matvec(v), &g, delta, 1e-10, d);
        prop_assert!(norm(&res.p) <= delta * (1.0 + 1e-12));
        prop_assert!(res.model_decrease >= 0.0);
        let bp = b.matvec(&res.p);
        let exact = -dot(&g, &res.p) - 0.5 * dot(&res.p, &bp);
        prop_assert!((exact - res.model_decrease).abs() <= 1e-9 * exact.abs().max(1.0));
    }

    #[test]
    fn steihaug_decrease_grows_with_iterations(seed in any::<u64>(), d in 2usize..12, delta in 0.1f64..50.0) {
        let mut r = rng(seed);
        let b = DenseMatrix::from_rows(&random_spd(&mut r, d, 0.1)).unwrap();
        let g = gauss_vec(&mut r, d);
        let mut prev = 0.0f64;
        for k in 1..=d {
            let res = trust_region::steihaug_cg(|v| b.matvec(v), &g, delta, 0.0, k);
            prop_assert!(res.model_decrease >= prev - 1e-12 * prev.abs().max(1.0));
            prev = res.model_decrease;
        }
    }

    #[test]
    fn radius_update_lands_in_known_set(delta in 1e-6f64..1e5, rho in -5f64..5.0, frac in 0f64..1.0) {
        let p = TrustRegionParams::default();
        let out = trust_region::adjust_tr(delta, rho, frac * delta, &p);
        let allowed = [delta, (p.zeta1 * delta).min(p.delta_max), p.zeta2 * delta];
        prop_assert!(allowed.contains(&out));
        prop_assert!(out > 0.0 && out <= p.delta_max.max(delta));
    }

    #[test]
    fn compact_sr1_is_symmetric(seed in any::<u64>(), d in 2usize..12, m in 1usize..8, gamma in 0.1f64..3.0) {
        let mut r = rng(seed);
        let a = random_symmetric(&mut r, d);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..m).map(|_| { let s = gauss_vec(&mut r, d); let y = matvec(&a, &s); (s, y) }).collect();
        let (c, _) = sr1::build_compact(pairs.iter().map(|(s, y)| (s.as_slice(), y.as_slice())), gamma, 1e-8);
        let b = c.to_dense(d);
        prop_assert!(b.asymmetry() <= 1e-9 * b.max_abs().max(1.0));
    }

    #[test]
    fn compact_sr1_invariant_to_joint_pair_scaling(seed in any::<u64>(), d in 2usize..10, m in 1usize..6, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let a = random_symmetric(&mut r, d);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..m).map(|_| { let s = gauss_vec(&mut r, d); let y = matvec(&a, &s); (s, y) }).collect();
        let scaled: Vec<(Vec<f64>, Vec<f64>)> = pairs.iter().map(|(s, y)| (s.iter().map(|v| v * c).collect(), y.iter().map(|v| v * c).collect())).collect();
        let (b1, r1) = sr1::build_compact(pairs.iter().map(|(s, y)| (s.as_slice(), y.as_slice())), 1.0, 1e-8);
        let (b2, r2) = sr1::build_compact(scaled.iter().map(|(s, y)| (s.as_slice(), y.as_slice())), 1.0, 1e-8);
        prop_assert_eq!(r1.accepted, r2.accepted);
        let v = gauss_vec(&mut r, d);
        prop_assert!(rel_err(&b2.hvp(&v), &b1.hvp(&v)) <= 1e-8);
    }

    #[test]
    fn spectrum_match_is_a_symmetric_nonnegative_distance(a in prop::collection::vec(-10f64..10.0, 1..10), b in prop::collection::vec(-10f64..10.0, 1..10)) {
        let ab = spectrum_match(&a, &b);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, spectrum_match(&b, &a));
        prop_assert_eq!(spectrum_match(&a, &a), 0.0);
        let mut rev = a.clone();
        rev.reverse();
        prop_assert_eq!(spectrum_match(&rev, &b), ab);
    }

    #[test]
    fn quantiles_are_ordered(xs in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let q = Quantiles::of(&xs).unwrap();
        prop_assert!(q.min <= q.q25 && q.q25 <= q.median && q.median <= q.q75 && q.q75 <= q.max);
        prop_assert_eq!(q.min, xs.iter().cloned().fold(f64::INFINITY, f64::min));
        prop_assert_eq!(q.max, xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn metered_ledger_agrees_with_counts(calls in prop::collection::vec(0u8..5, 0..40)) {
        let q = QuadraticObjective::random(4, 10.0, 3).unwrap();
        let m = Metered::new(&q);
        let w = vec![0.1; 4];
        for c in &calls {
            match c {
                0 => { m.value(&w).unwrap(); }
                1 => { m.gradient(&w).unwrap(); }
                2 => { m.value_and_gradient(&w).unwrap(); }
                3 => { m.hvp(&w, &w).unwrap(); }
                _ => { m.report(&w).unwrap(); }
            }
        }
        let charged = calls.iter().filter(|&&c| c < 4).count() as f64;
        prop_assert_eq!(m.audit().unwrap(), charged);
    }

    #[test]
    fn adam_step_is_bounded(grads in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..30), lr in 1e-4f64..1.0) {
        let cfg = AdamConfig { lr, eps_hat: 0.0, ..Default::default() };
        let mut st = AdamState::new(3);
        let mut w = vec![0.0; 3];
        for (t, g) in grads.iter().enumerate() {
            let before = w.clone();
            st.step(&mut w, g, &cfg);
            // Cauchy-Schwarz bound on |m_hat| / sqrt(v_hat) after t+1 steps
            let t1 = t as i32 + 1;
            let ratio: f64 = (0..t1)
                .map(|j| {
                    let wk = (1.0 - cfg.beta1) * cfg.beta1.powi(j);
                    let uk = (1.0 - cfg.beta2) * cfg.beta2.powi(j);
                    wk * wk / uk
                })
                .sum::<f64>()
                .sqrt();
            let bound = lr * ratio * (1.0 - cfg.beta2.powi(t1)).sqrt() / (1.0 - cfg.beta1.powi(t1));
            for i in 0..3 {
                let step = (w[i] - before[i]).abs();
                prop_assert!(!step.is_nan());
                prop_assert!(step <= bound * (1.0 + 1e-9) + 1e-300, "step {} bound {}", step, bound);
            }
        }
    }

    #[test]
    fn dense_bfgs_update_keeps_positive_definiteness(seed in any::<u64>(), d in 1usize..10) {
        let (_, pairs) = instance(seed, d, 1);
        let (s, y) = &pairs[0];
        let h = bfgs::bfgs_update_dense(&DenseMatrix::identity(d), s, y).unwrap();
        let v = gauss_vec(&mut rng(seed ^ 7), d);
        prop_assert!(dot(&v, &h.matvec(&v)) > 0.0);
    }
}
