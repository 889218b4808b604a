use super::scenario::Scenario;
use crate::geometry::{Spheroid, Vec3};
use crate::intruder::{predict_impact, ParticleTruth};
use nalgebra::Vector6;
use rand::Rng;
use std::f64::consts::TAU;
use thiserror::Error;

const MAX_DRAWS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("spawn failed at t = {time}: no valid trajectory in {MAX_DRAWS} draws")]
pub struct SpawnError {
    pub time: f64,
}

/// Point drawn uniformly by area: the height comes from inverting the cap
/// area, the longitude is uniform.
pub fn sample_surface_point<R: Rng + ?Sized>(s: &Spheroid, rng: &mut R) -> Vec3 {
    let total = s.surface_area();
    let area = rng.random::<f64>() * total;
    let z = s.z_for_cap_area(area).unwrap_or(0.0);
    s.point_at_z(z, rng.random::<f64>() * TAU)
}

/// Unit vector within `half_angle` of `axis`, uniform over the spherical cap.
fn cone_direction<R: Rng + ?Sized>(axis: &Vec3, half_angle: f64, rng: &mut R) -> Vec3 {
    let cos_t = 1.0 - rng.random::<f64>() * (1.0 - half_angle.cos());
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = rng.random::<f64>() * TAU;
    let helper = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    cos_t * axis + sin_t * (phi.cos() * e1 + phi.sin() * e2)
}

/// New particle released at `time`. It flies straight at an aim point drawn
/// uniformly by area, from a direction within the approach cone about the
/// outward normal there, and starts far enough out to reach the detection
/// range after the lead time. Draws whose line first meets the surface
/// anywhere else are rejected.
pub fn spawn_intruder<R: Rng + ?Sized>(
    rng: &mut R,
    scenario: &Scenario,
    id: usize,
    time: f64,
) -> Result<ParticleTruth, SpawnError> {
    let s = scenario.spheroid().map_err(|_| SpawnError { time })?;
    let it = &scenario.intruders;
    let detect = scenario.sensor.detection_range + s.equatorial_radius();
    for _ in 0..MAX_DRAWS {
        let aim = sample_surface_point(&s, rng);
        let back = cone_direction(&s.unit_normal(&aim), it.cone_half_angle_deg.to_radians(), rng);
        // Uniform on (lo, max]: 1 − U[0,1) lies in (0, 1].
        let lo = it.min_speed_fraction * it.max_speed;
        let speed = lo + (1.0 - rng.random::<f64>()) * (it.max_speed - lo);
        let start_range = detect + speed * it.lead_time_s;
        let qd = aim.dot(&back);
        let dist = -qd + (qd * qd - aim.norm_squared() + start_range * start_range).sqrt();
        let start = aim + dist * back;
        let v = -back * speed;
        let state = Vector6::new(start.x, start.y, start.z, v.x, v.y, v.z);
        let Some(hit) = predict_impact(&state, &s, time) else { continue };
        if (hit.point - aim).norm() > 1e-9 * s.equatorial_radius() {
            continue;
        }
        return Ok(ParticleTruth {
            id,
            state,
            epoch: time,
            detect_time: f64::NAN,
            impact_time: hit.time,
            impact_point: aim,
            alive: true,
        });
    }
    Err(SpawnError { time })
}
