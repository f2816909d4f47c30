//! Complex Wiener increments and per-trajectory random streams.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random stream for one trajectory. Every trajectory of an ensemble shares
/// the master seed and gets its own ChaCha stream, so results do not depend
/// on how trajectories are scheduled.
#[derive(Debug, Clone)]
pub struct TrajectoryRng(ChaCha8Rng);

impl TrajectoryRng {
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trajectory_index);
        Self(rng)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.random()
    }
}

/// One step's worth of complex Wiener increments, one per Lindblad operator.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub increments: Vec<C64>,
    pub dt: f64,
}

impl NoiseIncrement {
    pub fn zero(n_lindblads: usize, dt: f64) -> Self {
        Self { increments: vec![C64::new(0.0, 0.0); n_lindblads], dt }
    }

    /// Multiplies every increment by `exp(i theta)`.
    pub fn rotated(&self, theta: f64) -> Self {
        let u = C64::from_polar(1.0, theta);
        Self { increments: self.increments.iter().map(|d| d * u).collect(), dt: self.dt }
    }
}

/// Draws independent increments with real and imaginary parts each
/// distributed as N(0, dt/2), so that `E|dxi|^2 = dt` and `E dxi^2 = 0`.
pub fn sample_noise(rng: &mut TrajectoryRng, n_lindblads: usize, dt: f64) -> NoiseIncrement {
    let sigma = (0.5 * dt).sqrt();
    let increments = (0..n_lindblads)
        .map(|_| {
            let re = rng.standard_normal();
            let im = rng.standard_normal();
            C64::new(re * sigma, im * sigma)
        })
        .collect();
    NoiseIncrement { increments, dt }
}
