use rand_distr::{Distribution, StandardNormal};

use crate::numerics::RngStream;

/// Independent Gaussian observation noise. Feature `i` receives
/// `σ·h_i·ε` where `h_i` is its half-width and `ε ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn new(sigma: f64) -> Self {
        Self { sigma }
    }
}

pub fn add_observation_noise(obs: &[f64], half_widths: &[f64], spec: NoiseSpec, rng: &mut RngStream) -> Vec<f64> {
    assert_eq!(obs.len(), half_widths.len(), "observation and half-width lengths differ");
    if spec.sigma == 0.0 {
        return obs.to_vec();
    }
    obs.iter()
        .zip(half_widths)
        .map(|(&x, &h)| {
            let eps: f64 = StandardNormal.sample(rng);
            x + spec.sigma * h * eps
        })
        .collect()
}
