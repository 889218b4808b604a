use crate::geometry::{Spheroid, Vec3};
use nalgebra::Vector6;

/// Predicted impact of a straight-line trajectory on the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactPrediction {
    /// Absolute impact time.
    pub time: f64,
    pub point: Vec3,
}

/// Scaled coordinates in which the spheroid is the unit sphere.
fn scaled(s: &Spheroid, x: &Vector6<f64>) -> (Vec3, Vec3) {
    let (a, c) = (s.equatorial_radius(), s.polar_radius());
    (
        Vec3::new(x[0] / a, x[1] / a, x[2] / c),
        Vec3::new(x[3] / a, x[4] / a, x[5] / c),
    )
}

/// First time the trajectory `x` (position, velocity at `now`) meets the
/// spheroid, or `None` when it never does going forward. A state already
/// inside or on the surface impacts immediately at its foot point.
pub fn predict_impact(x: &Vector6<f64>, s: &Spheroid, now: f64) -> Option<ImpactPrediction> {
    let (p, d) = scaled(s, x);
    let pos = Vec3::new(x[0], x[1], x[2]);
    let vel = Vec3::new(x[3], x[4], x[5]);
    let c = p.norm_squared() - 1.0;
    if c <= 0.0 {
        let point = s.foot_point_normal(&pos).map(|n| n.foot_point).unwrap_or(pos);
        return Some(ImpactPrediction { time: now, point });
    }
    let a = d.norm_squared();
    let b = p.dot(&d);
    if a == 0.0 || b >= 0.0 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let tau = c / (-b + disc.sqrt());
    Some(ImpactPrediction { time: now + tau, point: pos + tau * vel })
}

/// Time offset of the trajectory's closest approach to the surface in the
/// scaled metric, clamped to the future.
pub fn closest_approach(x: &Vector6<f64>, s: &Spheroid) -> f64 {
    let (p, d) = scaled(s, x);
    let a = d.norm_squared();
    if a == 0.0 {
        return 0.0;
    }
    (-p.dot(&d) / a).max(0.0)
}
