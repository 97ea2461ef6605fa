//! Sampled quasi-Newton optimization.
//!
//! S-LBFGS and S-LSR1 build their curvature pairs afresh at every iterate
//! from random directions around it. Classical BFGS/SR1 variants, an
//! exact-Hessian trust-region Newton method, GD and ADAM are provided for
//! comparison, together with a multi-seed benchmark harness and eigenvalue
//! spectrum diagnostics.

pub mod accounting;
pub mod bfgs;
pub mod diagnostics;
pub mod first_order;
pub mod harness;
pub mod kernels;
pub mod linesearch;
pub mod objective;
pub mod rng;
pub mod sampler;
pub mod sr1;
pub mod trace;
pub mod trust_region;
