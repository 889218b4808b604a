use super::{cartesian, spherical, Measurement, NoiseModel};
use crate::geometry::Vec3;
use crate::quad::wrap_pi;
use nalgebra::{Matrix3, Matrix6, SMatrix, Vector6};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("measurement interval must be positive, got {0}")]
    NonPositiveInterval(f64),
    #[error("velocity inflation must be at least 1, got {0}")]
    Inflation(f64),
}

/// Tracked state (position, velocity) with its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfEstimate {
    pub x: Vector6<f64>,
    pub p: Matrix6<f64>,
    /// Time of the state.
    pub time: f64,
    /// Time of the last applied measurement update.
    pub last_update: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// No measurement was supplied.
    PredictOnly,
    /// The innovation covariance was singular or the range was degenerate.
    Skipped,
}

impl EkfEstimate {
    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x[0], self.x[1], self.x[2])
    }

    pub fn velocity(&self) -> Vec3 {
        Vec3::new(self.x[3], self.x[4], self.x[5])
    }

    /// Normalized estimation error squared against a true state.
    pub fn nees(&self, truth: &Vector6<f64>) -> f64 {
        let e = truth - self.x;
        match self.p.cholesky() {
            Some(ch) => e.dot(&ch.solve(&e)),
            None => f64::INFINITY,
        }
    }

    /// Propagate `dt` forward along the constant-velocity model, with no
    /// process noise.
    pub fn predicted(&self, dt: f64) -> EkfEstimate {
        let g = transition(dt);
        EkfEstimate {
            x: g * self.x,
            p: symmetrize(g * self.p * g.transpose()),
            time: self.time + dt,
            last_update: self.last_update,
        }
    }
}

pub(super) fn transition(dt: f64) -> Matrix6<f64> {
    let mut g = Matrix6::identity();
    for i in 0..3 {
        g[(i, i + 3)] = dt;
    }
    g
}

fn symmetrize(p: Matrix6<f64>) -> Matrix6<f64> {
    (p + p.transpose()) * 0.5
}

/// Mean and covariance of the Cartesian inversion of `z` under noise `r`,
/// from the 7-point unscented transform with κ = 0.
fn unscented_position(z: &Measurement, r: &Matrix3<f64>) -> (Vec3, Matrix3<f64>) {
    let n = 3.0;
    // `r` is diagonal, so its square root is too.
    let s = r.map(|v| (n * v).sqrt());
    let pts: Vec<Vec3> = (0..3)
        .flat_map(|i| {
            let col = s.column(i).into_owned();
            [cartesian(&(z + col)), cartesian(&(z - col))]
        })
        .collect();
    let w = 1.0 / (2.0 * n);
    let mean = pts.iter().sum::<Vec3>() * w;
    let cov = pts.iter().map(|p| (p - mean) * (p - mean).transpose()).sum::<Matrix3<f64>>() * w;
    (mean, cov)
}

/// Two-point initialization from measurements `z0` and `z1` taken `dt`
/// apart; the estimate refers to the time of `z1`. Position comes from `z1`,
/// velocity from the difference of the two inverted positions, and the
/// velocity block of the covariance is scaled by `inflation`.
pub fn ekf_init(
    z0: &Measurement,
    z1: &Measurement,
    dt: f64,
    time: f64,
    noise: &NoiseModel,
    inflation: f64,
) -> Result<EkfEstimate, EstimationError> {
    if !(dt > 0.0) {
        return Err(EstimationError::NonPositiveInterval(dt));
    }
    if !(inflation >= 1.0) {
        return Err(EstimationError::Inflation(inflation));
    }
    let r = noise.covariance();
    let (_, p0) = unscented_position(z0, &r);
    let (_, p1) = unscented_position(z1, &r);
    let q0 = cartesian(z0);
    let q1 = cartesian(z1);
    let v = (q1 - q0) / dt;
    let mut p = Matrix6::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&p1);
    p.fixed_view_mut::<3, 3>(0, 3).copy_from(&(p1 / dt));
    p.fixed_view_mut::<3, 3>(3, 0).copy_from(&(p1 / dt));
    p.fixed_view_mut::<3, 3>(3, 3).copy_from(&((p0 + p1) * (inflation / (dt * dt))));
    Ok(EkfEstimate {
        x: Vector6::new(q1.x, q1.y, q1.z, v.x, v.y, v.z),
        p: symmetrize(p),
        time,
        last_update: time,
    })
}

/// Jacobian of the spherical measurement with respect to position.
fn jacobian(p: &Vec3) -> Matrix3<f64> {
    let rho2 = p.norm_squared();
    let rho = rho2.sqrt();
    let r2 = p.x * p.x + p.y * p.y;
    let r = r2.sqrt();
    let mut h = Matrix3::zeros();
    h.row_mut(0).copy_from(&(p / rho).transpose());
    if r > 0.0 {
        h[(1, 0)] = -p.y / r2;
        h[(1, 1)] = p.x / r2;
        h[(2, 0)] = p.z * p.x / (r * rho2);
        h[(2, 1)] = p.z * p.y / (r * rho2);
    }
    h[(2, 2)] = -r / rho2;
    h
}

/// Predict by `dt`, then update with `z` when one is given. The azimuth
/// channel is dropped near the z axis, where it carries no information.
pub fn ekf_step(
    est: &EkfEstimate,
    z: Option<&Measurement>,
    dt: f64,
    noise: &NoiseModel,
) -> Result<(EkfEstimate, UpdateOutcome), EstimationError> {
    if !(dt > 0.0) {
        return Err(EstimationError::NonPositiveInterval(dt));
    }
    let mut next = est.predicted(dt);
    let Some(z) = z else {
        return Ok((next, UpdateOutcome::PredictOnly));
    };
    let p = next.position();
    let rho = p.norm();
    if !(rho > 1e-9) {
        return Ok((next, UpdateOutcome::Skipped));
    }
    let pred = spherical(&p);
    let mut innov = z - pred;
    innov.y = wrap_pi(innov.y);
    let mut hp = jacobian(&p);
    let mut r = noise.covariance();
    if p.x.hypot(p.y) < 1e-3 * rho {
        hp.row_mut(1).fill(0.0);
        innov.y = 0.0;
        r[(1, 1)] = 1.0;
    }
    let mut h = SMatrix::<f64, 3, 6>::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&hp);
    let s = h * next.p * h.transpose() + r;
    let Some(s_inv) = s.try_inverse() else {
        return Ok((next, UpdateOutcome::Skipped));
    };
    if !s_inv.iter().all(|v| v.is_finite()) {
        return Ok((next, UpdateOutcome::Skipped));
    }
    let k = next.p * h.transpose() * s_inv;
    let ikh = Matrix6::identity() - k * h;
    next.x += k * innov;
    next.p = symmetrize(ikh * next.p * ikh.transpose() + k * r * k.transpose());
    next.last_update = next.time;
    Ok((next, UpdateOutcome::Applied))
}
