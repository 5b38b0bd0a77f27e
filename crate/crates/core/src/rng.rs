//! Random streams and the distributions the simulator draws from.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The random stream type used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

/// Stream for trial `trial` of sweep point `sweep_index`.
///
/// ChaCha's 64-bit stream id gives every (sweep, trial) pair its own
/// non-overlapping keystream under the same key, so results do not depend on
/// which worker runs which trial.
pub fn trial_rng(master_seed: u64, sweep_index: usize, trial: usize) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((sweep_index as u64) << 40) | (trial as u64 & ((1 << 40) - 1)));
    rng
}

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One draw from CN(0, variance).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// Uniform phase in [0, 2π).
pub fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() * std::f64::consts::TAU
}
