use super::ekf::{transition, EkfEstimate};
use super::impact::{closest_approach, predict_impact};
use crate::geometry::{Spheroid, Vec3};
use crate::sensing::SurfaceMesh;
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Parameters of the decay a tracked particle imposes on the coverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayConfig {
    pub lambda: f64,
    /// Time added to the horizon beyond the estimated impact.
    pub pad: f64,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Truncation radius in standard deviations.
    pub cutoff: f64,
    /// Added to the predicted position covariance, in length².
    pub regularization: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            pad: 5.0,
            min_nodes: 64,
            max_nodes: 20_000,
            cutoff: 6.0,
            regularization: 1e-4,
        }
    }
}

/// Sparse per-cell decay rates, sorted by cell index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecayMap {
    pub entries: Vec<(usize, f64)>,
    /// Time horizon that was integrated.
    pub horizon: f64,
}

impl DecayMap {
    pub fn add_to(&self, rates: &mut [f64]) {
        for &(i, v) in &self.entries {
            rates[i] += v;
        }
    }

    pub fn get(&self, cell: usize) -> f64 {
        self.entries
            .binary_search_by_key(&cell, |e| e.0)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn total(&self, mesh: &SurfaceMesh) -> f64 {
        self.entries.iter().map(|&(i, v)| v * mesh.cells()[i].area).sum()
    }
}

/// Trivariate normal density.
pub fn gaussian_density(x: &Vec3, mean: &Vec3, cov: &Matrix3<f64>) -> f64 {
    Gaussian::new(*mean, cov).map_or(0.0, |g| g.density(x))
}

/// A normal density with its factorization cached.
struct Gaussian {
    mean: Vec3,
    inv: Matrix3<f64>,
    scale: f64,
}

impl Gaussian {
    fn new(mean: Vec3, cov: &Matrix3<f64>) -> Option<Self> {
        let ch = cov.cholesky()?;
        let det = ch.l().diagonal().product().powi(2);
        Some(Self { mean, inv: ch.inverse(), scale: 1.0 / ((2.0 * PI).powi(3) * det).sqrt() })
    }

    fn density(&self, x: &Vec3) -> f64 {
        let e = x - self.mean;
        self.scale * (-0.5 * e.dot(&(self.inv * e))).exp()
    }
}

fn position_cov(est: &EkfEstimate, tau: f64, reg: f64) -> Matrix3<f64> {
    let g = transition(tau);
    let p = g * est.p * g.transpose();
    let pp = p.fixed_view::<3, 3>(0, 0).into_owned();
    (pp + pp.transpose()) * 0.5 + Matrix3::identity() * reg
}

/// Decay rate per cell at time `now` for the particle tracked by `est`:
/// `λ ∫ N(cell; p̂(now+τ), P(now+τ)) dτ` over `τ ∈ [0, T_H]`, where the
/// horizon runs to the estimated impact plus the pad, or to the closest
/// approach plus the pad when no impact is predicted.
///
/// Each τ node is evaluated either by sampling the density at cell centers,
/// or, when the covariance is narrow compared with the cells, by depositing
/// its normal marginal into the cell beneath the node.
pub fn decay_field(est: &EkfEstimate, now: f64, mesh: &SurfaceMesh, cfg: &DecayConfig) -> DecayMap {
    let s = mesh.spheroid();
    let base = if now > est.time { est.predicted(now - est.time) } else { est.clone() };
    let horizon = match predict_impact(&base.x, s, now) {
        Some(hit) => (hit.time - now).max(0.0),
        None => closest_approach(&base.x, s),
    } + cfg.pad;
    let p0 = base.position();
    let vel = base.velocity();

    let reg = cfg.regularization;
    let ends = [position_cov(&base, 0.0, reg), position_cov(&base, horizon, reg)];
    let speed = vel.norm();
    // Node spacing: half the narrowest positional spread at each node, in
    // time, kept between horizon/max_nodes and horizon/min_nodes.
    let (h_min, h_max) = (horizon / cfg.max_nodes as f64, horizon / cfg.min_nodes as f64);
    let step_at = |sigma_min: f64| {
        if speed > 0.0 {
            (0.5 * sigma_min / speed).clamp(h_min, h_max)
        } else {
            h_max
        }
    };

    // Nodes whose mean lies far enough outside the surface contribute nothing.
    let reach = cfg.cutoff * ends.iter().map(|p| p.trace()).fold(0.0, f64::max).sqrt();
    let (a, c) = (s.equatorial_radius(), s.polar_radius());
    let grow = (a / c) * reach;
    let window = Spheroid::new(a + grow, c + grow)
        .ok()
        .and_then(|outer| {
            if vel.norm_squared() == 0.0 {
                (outer.implicit(&p0) <= 0.0).then_some((0.0, horizon))
            } else {
                outer.line_crossings(&p0, &vel)
            }
        });
    let Some((t_in, t_out)) = window else {
        return DecayMap { entries: Vec::new(), horizon };
    };

    let h_cell = (mesh.total_area() / mesh.len() as f64).sqrt();
    let mut rates: Vec<(usize, f64)> = Vec::new();
    let mut near = Vec::new();
    // Trapezoid rule on the adaptive nodes: each node carries half of the
    // intervals on either side.
    let (mut tau, mut h_prev) = (0.0_f64, 0.0);
    loop {
        let cov = position_cov(&base, tau, reg);
        let eig = cov.symmetric_eigenvalues();
        let (lo, hi) = (eig.min().max(reg), eig.max());
        let h_next = if tau >= horizon { 0.0 } else { step_at(lo.sqrt()).min(horizon - tau) };
        let w = 0.5 * (h_prev + h_next) * cfg.lambda;
        if tau >= t_in && tau <= t_out {
            let mean = p0 + tau * vel;
            if lo.sqrt() >= 0.5 * h_cell {
                if let Some(g) = Gaussian::new(mean, &cov) {
                    mesh.cells_near(&mean, cfg.cutoff * hi.sqrt(), &mut near);
                    for &i in &near {
                        let d = g.density(&mesh.cells()[i].center);
                        if d > 0.0 {
                            rates.push((i, w * d));
                        }
                    }
                }
            } else if let Ok(nrm) = s.foot_point_normal(&mean) {
                let var = nrm.direction.dot(&(cov * nrm.direction));
                if nrm.length.abs() <= cfg.cutoff * var.sqrt() {
                    let phi = (-0.5 * nrm.length * nrm.length / var).exp() / (2.0 * PI * var).sqrt();
                    let i = mesh.locate_point(&nrm.foot_point);
                    rates.push((i, w * phi / mesh.cells()[i].area));
                }
            }
        }
        if h_next <= 0.0 || tau > t_out {
            break;
        }
        tau += h_next;
        h_prev = h_next;
        // Land exactly on the horizon rather than a rounding step short of it.
        if horizon - tau < 1e-12 * horizon.max(1.0) {
            tau = horizon;
        }
    }
    rates.sort_unstable_by_key(|e| e.0);
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(rates.len());
    for (i, v) in rates {
        match entries.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => entries.push((i, v)),
        }
    }
    DecayMap { entries, horizon }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::MeshConfig;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix6, Vector6};

    fn mesh() -> SurfaceMesh {
        let s = Spheroid::new(80.0, 20.0).unwrap();
        let b = s.partition_bounds(4).unwrap();
        SurfaceMesh::new(s, &b, MeshConfig { target_cells: 4000, ..MeshConfig::default() }).unwrap()
    }

    fn estimate(x: Vector6<f64>, sigma: f64) -> EkfEstimate {
        EkfEstimate { x, p: Matrix6::identity() * sigma * sigma, time: 0.0, last_update: 0.0 }
    }

    #[test]
    fn density_integrates_to_one() {
        let cov = Matrix3::new(2.0, 0.3, 0.0, 0.3, 1.0, -0.2, 0.0, -0.2, 0.5);
        let mean = Vec3::new(0.3, -0.1, 0.2);
        let h = 0.1;
        let mut total = 0.0;
        for i in -100..100 {
            for j in -80..80 {
                for k in -60..60 {
                    let x = Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * h;
                    total += gaussian_density(&x, &mean, &cov) * h.powi(3);
                }
            }
        }
        assert!((total - 1.0).abs() < 0.01, "{total}");
    }

    #[test]
    fn linear_in_lambda() {
        let m = mesh();
        let est = estimate(Vector6::new(140.0, 10.0, 5.0, -2.0, 0.0, 0.0), 1.0);
        let cfg = DecayConfig::default();
        let one = decay_field(&est, 0.0, &m, &cfg);
        let two = decay_field(&est, 0.0, &m, &DecayConfig { lambda: 2.0 * cfg.lambda, ..cfg });
        assert!(!one.entries.is_empty());
        assert_eq!(one.entries.len(), two.entries.len());
        for (a, b) in one.entries.iter().zip(&two.entries) {
            assert_eq!(a.0, b.0);
            assert_relative_eq!(b.1, 2.0 * a.1, max_relative = 1e-14);
        }
    }

    #[test]
    fn stationary_radial_profile() {
        let m = mesh();
        let s = *m.spheroid();
        let centre = s.point_from_geodetic(0.5, 0.2);
        let sigma = 6.0;
        let mut est = estimate(Vector6::new(centre.x, centre.y, centre.z, 0.0, 0.0, 0.0), sigma);
        // Known velocity keeps the position covariance fixed.
        est.p.fixed_view_mut::<3, 3>(3, 3).fill(0.0);
        let cfg = DecayConfig { regularization: 0.0, ..DecayConfig::default() };
        let map = decay_field(&est, 0.0, &m, &cfg);
        // On the surface: the horizon is just the pad.
        assert_relative_eq!(map.horizon, cfg.pad);
        let peak = cfg.lambda * cfg.pad / ((2.0 * PI).powf(1.5) * sigma.powi(3));
        let mut checked = 0;
        for &(i, v) in &map.entries {
            let r = (m.cells()[i].center - centre).norm();
            let want = peak * (-0.5 * r * r / (sigma * sigma)).exp();
            assert_relative_eq!(v, want, max_relative = 1e-9, epsilon = 0.0);
            checked += 1;
        }
        assert!(checked > 50);
        // Decreasing with distance.
        let mut by_r: Vec<(f64, f64)> =
            map.entries.iter().map(|&(i, v)| ((m.cells()[i].center - centre).norm(), v)).collect();
        by_r.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(by_r.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12)));
    }

    #[test]
    fn narrow_track_deposits_its_mass() {
        let m = mesh();
        // Straight down onto the pole, tight covariance: the surface receives
        // about λ times the time the mean spends within a few σ of it.
        let est = estimate(Vector6::new(3.0, 2.0, 60.0, 0.0, 0.0, -2.0), 0.05);
        let cfg = DecayConfig::default();
        let map = decay_field(&est, 0.0, &m, &cfg);
        assert!((map.horizon - 20.0 - cfg.pad).abs() < 0.05);
        // Integrating φ(s) over the track gives 1/|v| per unit normal crossing,
        // counted once before and once after the impact point.
        let want = cfg.lambda / 2.0;
        assert_relative_eq!(map.total(&m), want, max_relative = 0.02);
        assert!(map.entries.iter().all(|e| e.1 >= 0.0));
    }

    #[test]
    fn far_particle_has_no_decay() {
        let m = mesh();
        let est = estimate(Vector6::new(400.0, 0.0, 0.0, 1.0, 0.0, 0.0), 0.5);
        let map = decay_field(&est, 0.0, &m, &DecayConfig::default());
        assert!(map.entries.is_empty());
    }
}
