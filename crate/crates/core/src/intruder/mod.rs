//! Constant-velocity particle intruders: ground truth, spherical range
//! measurements from the origin, the tracking filter, impact prediction and
//! the coverage decay they induce.

mod decay;
mod ekf;
mod impact;

pub use decay::{decay_field, gaussian_density, DecayConfig, DecayMap};
pub use ekf::{ekf_init, ekf_step, EkfEstimate, EstimationError, UpdateOutcome};
pub use impact::{closest_approach, predict_impact, ImpactPrediction};

use crate::geometry::Vec3;
use nalgebra::{Matrix3, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Range, azimuth and polar angle `(ρ, θ, ψ)`.
pub type Measurement = Vec3;

/// Spherical coordinates of `p` about the origin. The azimuth is taken as 0
/// on the z axis and the polar angle as 0 at the origin itself.
pub fn spherical(p: &Vec3) -> Measurement {
    let rho = p.norm();
    let theta = if p.x == 0.0 && p.y == 0.0 { 0.0 } else { p.y.atan2(p.x) };
    let psi = if rho > 0.0 { (p.z / rho).clamp(-1.0, 1.0).acos() } else { 0.0 };
    Vec3::new(rho, theta, psi)
}

/// Inverse of [`spherical`].
pub fn cartesian(z: &Measurement) -> Vec3 {
    let (st, ct) = z.y.sin_cos();
    let (sp, cp) = z.z.sin_cos();
    Vec3::new(z.x * sp * ct, z.x * sp * st, z.x * cp)
}

/// Standard deviations of the three measurement channels. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_range: f64,
    pub sigma_azimuth: f64,
    pub sigma_polar: f64,
}

impl NoiseModel {
    /// σ_ρ² = 0.0625 and σ_θ² = σ_ψ² = 0.25 deg².
    pub fn nominal() -> Self {
        let deg = 0.5_f64.to_radians();
        Self { sigma_range: 0.25, sigma_azimuth: deg, sigma_polar: deg }
    }

    pub fn zero() -> Self {
        Self { sigma_range: 0.0, sigma_azimuth: 0.0, sigma_polar: 0.0 }
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vec3::new(
            self.sigma_range.powi(2),
            self.sigma_azimuth.powi(2),
            self.sigma_polar.powi(2),
        ))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let mut draw = || rng.sample::<f64, _>(StandardNormal);
        Vec3::new(self.sigma_range * draw(), self.sigma_azimuth * draw(), self.sigma_polar * draw())
    }
}

/// Noisy measurement of a particle at `p` given a noise draw.
pub fn measure(p: &Vec3, noise: &Vec3) -> Measurement {
    spherical(p) + noise
}

/// Ground truth of one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleTruth {
    pub id: usize,
    /// Position and velocity at `epoch`.
    pub state: Vector6<f64>,
    pub epoch: f64,
    pub detect_time: f64,
    pub impact_time: f64,
    pub impact_point: Vec3,
    pub alive: bool,
}

impl ParticleTruth {
    pub fn velocity(&self) -> Vec3 {
        Vec3::new(self.state[3], self.state[4], self.state[5])
    }

    pub fn position_at(&self, t: f64) -> Vec3 {
        Vec3::new(self.state[0], self.state[1], self.state[2]) + (t - self.epoch) * self.velocity()
    }

    pub fn state_at(&self, t: f64) -> Vector6<f64> {
        let p = self.position_at(t);
        let v = self.velocity();
        Vector6::new(p.x, p.y, p.z, v.x, v.y, v.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn axis_measurements() {
        let z = measure(&Vec3::new(80.0, 0.0, 0.0), &Vec3::zeros());
        assert_relative_eq!(z, Vec3::new(80.0, 0.0, FRAC_PI_2), epsilon = 1e-15);
        let z = measure(&Vec3::new(0.0, 0.0, 50.0), &Vec3::zeros());
        assert_eq!(z, Vec3::new(50.0, 0.0, 0.0));
    }

    #[test]
    fn round_trip() {
        for p in [Vec3::new(3.0, -4.0, 12.0), Vec3::new(-80.0, 1.0, -30.0), Vec3::new(0.5, 0.25, -0.1)] {
            assert_relative_eq!(cartesian(&spherical(&p)), p, epsilon = 1e-12);
        }
    }

    #[test]
    fn noise_statistics() {
        let noise = NoiseModel::nominal();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = Vec3::new(60.0, -50.0, 40.0);
        let truth = spherical(&p);
        let n = 100_000;
        let mut mean = Vec3::zeros();
        for _ in 0..n {
            mean += measure(&p, &noise.sample(&mut rng)) / n as f64;
        }
        let sig = Vec3::new(noise.sigma_range, noise.sigma_azimuth, noise.sigma_polar);
        for i in 0..3 {
            assert!((mean[i] - truth[i]).abs() < 4.0 * sig[i] / (n as f64).sqrt());
        }
    }

    #[test]
    fn truth_moves_linearly() {
        let t = ParticleTruth {
            id: 0,
            state: Vector6::new(100.0, 0.0, 0.0, -0.5, 0.1, 0.0),
            epoch: 10.0,
            detect_time: 10.0,
            impact_time: f64::NAN,
            impact_point: Vec3::zeros(),
            alive: true,
        };
        assert_relative_eq!(t.position_at(30.0), Vec3::new(90.0, 2.0, 0.0), epsilon = 1e-12);
    }
}
