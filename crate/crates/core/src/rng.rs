//! Seeded random streams.
//!
//! Every run derives independent ChaCha8 streams from one user seed: the
//! stream id separates parameter initialisation, curvature-pair sampling,
//! data generation and mini-batch shuffling so that changing one consumer
//! never perturbs another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type RunRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Sampling = 2,
    Data = 3,
    Shuffle = 4,
    Probe = 5,
}

pub fn stream(seed: u64, stream: Stream) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// i.i.d. uniform entries on `[-scale, scale]`.
pub fn uniform_vec<R: Rng + ?Sized>(rng: &mut R, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
        .collect()
}
