//! Body-frame velocity commands for the five operating modes.

use crate::geometry::{
    heading_vector, meridian_direction, GeometryError, Spheroid, SurfaceFamily, SurfaceNormal, Vec3,
};
use crate::kinematics::{
    euler_rate_matrix_inverse, rotation_body_to_global, AgentConfig, AgentState, BodyVelocity,
};
use crate::quad::wrap_pi;
use crate::sensing::LocalTerms;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("surface collision: distance {distance} to the surface is within the body radius {radius}")]
    SurfaceCollision { distance: f64, radius: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A velocity command with the terms it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    pub velocity: BodyVelocity,
    /// `ln((‖n‖ − 𝓇)/(h − 𝓇))` for the target height h of the mode.
    pub log_altitude: f64,
    /// Global-frame tangential heading for the geodesic modes.
    pub heading: Option<Vec3>,
}

/// `ln((d − 𝓇)/(h − 𝓇))`: zero at the target height, negative below it.
pub fn log_altitude(distance: f64, body_radius: f64, height: f64) -> f64 {
    ((distance - body_radius) / (height - body_radius)).ln()
}

/// Target height above the base surface of tier `mu`.
pub fn tier_height(cfg: &AgentConfig, mu: usize) -> f64 {
    (cfg.gamma + mu as f64) * cfg.sensing_range
}

fn check_clearance(cfg: &AgentConfig, nrm: &SurfaceNormal) -> Result<(), ControlError> {
    if nrm.length <= cfg.body_radius {
        return Err(ControlError::SurfaceCollision {
            distance: nrm.length,
            radius: cfg.body_radius,
        });
    }
    Ok(())
}

/// Euler-angle errors that turn the boresight onto `-n̂`, as body rates
/// through the inverse Euler-rate map.
fn alignment_rates(agent: &AgentState, n: &Vec3) -> Vec3 {
    let pitch = n.z.clamp(-1.0, 1.0).asin() - agent.euler.y;
    let yaw = wrap_pi((-n.y).atan2(-n.x) - agent.euler.z);
    euler_rate_matrix_inverse(&agent.euler) * Vec3::new(0.0, pitch, yaw)
}

fn sat(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Gradient-following local coverage command.
///
/// The translational gradient part is dropped once `‖a₁₂₃‖` falls below
/// `1e−9·C*²·R³`, where the normalized direction is meaningless.
pub fn local_coverage_control(
    cfg: &AgentConfig,
    agent: &AgentState,
    terms: &LocalTerms,
    nrm: &SurfaceNormal,
    c_star: f64,
) -> Result<ControlCommand, ControlError> {
    check_clearance(cfg, nrm)?;
    let r1t = rotation_body_to_global(&agent.euler).transpose();
    let n = nrm.direction;
    let log_alt = log_altitude(nrm.length, cfg.body_radius, cfg.gamma * cfg.sensing_range);
    let rho_l = r1t * (-log_alt * n);
    let rho_a = cfg.xi * alignment_rates(agent, &n);

    let a = &terms.a;
    let norm = terms.translational_norm();
    let floor = 1e-9 * c_star * c_star * cfg.sensing_range.powi(3);
    let grad = if norm >= floor {
        Vec3::new(cfg.k_u * a[0], cfg.k_v * a[1], cfg.k_w * a[2]) / norm
    } else {
        Vec3::zeros()
    };
    let r = if cfg.r_max > 0.0 { cfg.r_max * sat(cfg.k_r * a[3] / cfg.r_max) } else { 0.0 };
    let s = if cfg.s_max > 0.0 { cfg.s_max * sat(cfg.k_s * a[4] / cfg.s_max) } else { 0.0 };
    Ok(ControlCommand {
        velocity: BodyVelocity {
            linear: grad + rho_l,
            angular: Vec3::new(0.0, r + rho_a.y, s + rho_a.z),
        },
        log_altitude: log_alt,
        heading: None,
    })
}

/// Unit tangent at `from` pointing along the shortest path on `surface`
/// towards `to`. Both points must lie on `surface`. Returns `None` when they
/// coincide.
pub fn geodesic_heading(surface: &Spheroid, from: &Vec3, to: &Vec3) -> Option<Vec3> {
    let sol = surface.geodesic(from, to);
    if sol.distance <= 1e-9 * surface.equatorial_radius() {
        return None;
    }
    match heading_vector(surface, from, sol.initial_heading) {
        Ok(v) => Some(v),
        // At a pole every direction is south: head down the target meridian.
        Err(_) => {
            let m = meridian_direction(to.y.atan2(to.x));
            Some(if from.z > 0.0 { m } else { -m })
        }
    }
}

/// Geodesic guidance on tier `mu` towards `destination` (any point on the
/// base normal line of the target). Shared by particle intercept, partition
/// transfer and return to base.
///
/// The linear command always has magnitude `U`, except that with
/// `arrive = Some(dt)` the tangential part is scaled down so the agent does
/// not overshoot a destination closer than one step.
pub fn geodesic_control(
    cfg: &AgentConfig,
    family: &SurfaceFamily,
    agent: &AgentState,
    destination: &Vec3,
    mu: usize,
    nrm: &SurfaceNormal,
    arrive: Option<f64>,
) -> Result<ControlCommand, ControlError> {
    check_clearance(cfg, nrm)?;
    let surface = family.surface(mu);
    let here = family.along_normal(mu, nrm);
    let there = family.project_to_surface(mu, destination)?;
    let n = nrm.direction;
    let log_alt = log_altitude(nrm.length, cfg.body_radius, tier_height(cfg, mu));
    let mut nu = geodesic_heading(&surface, &here, &there).unwrap_or_else(Vec3::zeros);
    if let Some(dt) = arrive {
        let gap = (there - here).norm();
        nu *= (gap / (cfg.max_speed * dt)).min(1.0);
    }
    let dir = nu - log_alt * n;
    let len = dir.norm();
    let r1t = rotation_body_to_global(&agent.euler).transpose();
    let linear = if len > 0.0 {
        let scale = if arrive.is_some() { len.min(1.0) } else { 1.0 };
        r1t * (dir / len) * (cfg.max_speed * scale)
    } else {
        Vec3::zeros()
    };
    let mut angular = alignment_rates(agent, &n);
    angular.x = angular.x.clamp(-cfg.r_max, cfg.r_max);
    angular.y = angular.y.clamp(-cfg.r_max, cfg.r_max);
    angular.z = angular.z.clamp(-cfg.s_max, cfg.s_max);
    Ok(ControlCommand {
        velocity: BodyVelocity { linear, angular },
        log_altitude: log_alt,
        heading: Some(nu),
    })
}

/// Point on the base surface on the agent's longitude at the nearer bound of
/// band `[lower, upper]`, moved `inset` into the band. `None` when the foot
/// point is already inside.
pub fn partition_destination(
    spheroid: &Spheroid,
    foot: &Vec3,
    lower: f64,
    upper: f64,
    inset: f64,
) -> Option<Vec3> {
    let inset = inset.min(0.5 * (upper - lower));
    let z = if foot.z < lower {
        lower + inset
    } else if foot.z > upper {
        upper - inset
    } else {
        return None;
    };
    Some(spheroid.point_at_z(z, foot.y.atan2(foot.x)))
}

/// Climb or descend along the normal to the tier at height `height`, at full
/// speed, with no rotation. Converged (zero command) exactly at the target.
pub fn surface_transfer_control(
    cfg: &AgentConfig,
    agent: &AgentState,
    height: f64,
    nrm: &SurfaceNormal,
) -> Result<ControlCommand, ControlError> {
    check_clearance(cfg, nrm)?;
    let log_alt = log_altitude(nrm.length, cfg.body_radius, height);
    // Ascend while below the target tier.
    let dir = -log_alt.signum() * nrm.direction;
    let linear = if log_alt == 0.0 {
        Vec3::zeros()
    } else {
        rotation_body_to_global(&agent.euler).transpose() * dir * cfg.max_speed
    };
    Ok(ControlCommand {
        velocity: BodyVelocity { linear, angular: Vec3::zeros() },
        log_altitude: log_alt,
        heading: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn cfg() -> AgentConfig {
        AgentConfig::default()
    }

    fn sph() -> Spheroid {
        Spheroid::new(80.0, 20.0).unwrap()
    }

    fn family() -> SurfaceFamily {
        SurfaceFamily::new(sph(), 0.5, 10.0, 4)
    }

    /// Agent `height` above the surface point at geodetic (lat, lon), boresight
    /// on `-n̂`.
    fn above(lat: f64, lon: f64, height: f64) -> (AgentState, SurfaceNormal) {
        let s = sph();
        let q = s.point_from_geodetic(lat, lon);
        let n = s.unit_normal(&q);
        let agent = AgentState::new(q + height * n, Vec3::new(0.0, n.z.asin(), (-n.y).atan2(-n.x)));
        let nrm = s.foot_point_normal(&agent.position).unwrap();
        (agent, nrm)
    }

    fn global(agent: &AgentState, cmd: &ControlCommand) -> Vec3 {
        rotation_body_to_global(&agent.euler) * cmd.velocity.linear
    }

    #[test]
    fn equilibrium_at_nominal_altitude() {
        let (agent, nrm) = above(0.4, 1.0, 5.0);
        let cmd = local_coverage_control(&cfg(), &agent, &LocalTerms { a: [0.0; 5] }, &nrm, 20.0).unwrap();
        assert_relative_eq!(cmd.log_altitude, 0.0, epsilon = 1e-9);
        assert!(cmd.velocity.linear.norm() < 1e-8);
        assert!(cmd.velocity.angular.norm() < 1e-9);
    }

    #[test]
    fn surface_term_repels_below_nominal() {
        let (agent, nrm) = above(-0.3, 2.0, 2.5);
        let cmd = local_coverage_control(&cfg(), &agent, &LocalTerms { a: [0.0; 5] }, &nrm, 20.0).unwrap();
        let want = -(1.5_f64 / 4.0).ln();
        let v = global(&agent, &cmd);
        assert_relative_eq!(v, want * nrm.direction, epsilon = 1e-9);
        assert!(want > 0.0);
    }

    #[test]
    fn coverage_gradient_is_normalized_and_saturated() {
        let (agent, nrm) = above(0.1, 0.0, 5.0);
        let terms = LocalTerms { a: [3.0, 0.0, 4.0, 100.0, -100.0] };
        let c = cfg();
        let cmd = local_coverage_control(&c, &agent, &terms, &nrm, 20.0).unwrap();
        assert_relative_eq!(cmd.velocity.linear, Vec3::new(0.6 * c.k_u, 0.0, 0.8 * c.k_w), epsilon = 1e-9);
        assert_relative_eq!(cmd.velocity.angular.y, c.r_max, epsilon = 1e-9);
        assert_relative_eq!(cmd.velocity.angular.z, -c.s_max, epsilon = 1e-9);
        assert_eq!(cmd.velocity.angular.x, 0.0);
    }

    #[test]
    fn collision_is_an_error() {
        let (agent, nrm) = above(0.1, 0.0, 0.9);
        assert!(matches!(
            local_coverage_control(&cfg(), &agent, &LocalTerms { a: [0.0; 5] }, &nrm, 20.0),
            Err(ControlError::SurfaceCollision { .. })
        ));
        assert!(surface_transfer_control(&cfg(), &agent, 5.0, &nrm).is_err());
    }

    #[test]
    fn intercept_on_tier_is_tangential() {
        let (agent, nrm) = above(0.2, 0.3, 5.0);
        let dest = sph().point_from_geodetic(-0.4, 1.5);
        let c = cfg();
        let cmd = geodesic_control(&c, &family(), &agent, &dest, 0, &nrm, None).unwrap();
        let v = global(&agent, &cmd);
        assert_relative_eq!(v.norm(), c.max_speed, epsilon = 1e-9);
        // Tangent to the tier, whose normal differs slightly from the base one.
        let tier = family().surface(0);
        let here = family().along_normal(0, &nrm);
        assert!(v.dot(&tier.unit_normal(&here)).abs() < 1e-6);
        assert!(v.dot(&nrm.direction).abs() < 0.05 * c.max_speed);
        assert_relative_eq!(v / c.max_speed, cmd.heading.unwrap(), epsilon = 1e-6);
    }

    #[test]
    fn intercept_pulls_back_to_tier() {
        // 20% above the tier-0 height.
        let (agent, nrm) = above(0.2, 0.3, 6.0);
        let dest = sph().point_from_geodetic(-0.4, 1.5);
        let c = cfg();
        let cmd = geodesic_control(&c, &family(), &agent, &dest, 0, &nrm, None).unwrap();
        let v = global(&agent, &cmd);
        let l = (5.0_f64 / 4.0).ln();
        let nu = cmd.heading.unwrap();
        let want = (nu - l * nrm.direction).normalize() * c.max_speed;
        assert_relative_eq!(v, want, epsilon = 1e-9);
        assert!(v.dot(&nrm.direction) < 0.0);
    }

    #[test]
    fn return_to_base_from_equator_heads_north() {
        let (agent, nrm) = above(0.0, 0.7, 5.0);
        let f = Vec3::new(0.0, 0.0, 25.0);
        let c = cfg();
        let cmd = geodesic_control(&c, &family(), &agent, &f, 0, &nrm, Some(0.05)).unwrap();
        let v = global(&agent, &cmd);
        assert_relative_eq!(v, Vec3::new(0.0, 0.0, c.max_speed), epsilon = 1e-6);
    }

    #[test]
    fn arrival_does_not_overshoot() {
        let f = Vec3::new(0.0, 0.0, 25.0);
        let s = family().surface(0);
        let p = s.point_from_geodetic(FRAC_PI_2 - 0.001, 0.0);
        let agent = AgentState::new(p, Vec3::new(0.0, -1.5, 0.0));
        let nrm = sph().foot_point_normal(&p).unwrap();
        let c = cfg();
        let cmd = geodesic_control(&c, &family(), &agent, &f, 0, &nrm, Some(0.05)).unwrap();
        let v = global(&agent, &cmd);
        let gap = (p - f).norm();
        assert!(v.norm() * 0.05 <= gap * 1.01, "{} vs {gap}", v.norm() * 0.05);
    }

    #[test]
    fn partition_destination_cases() {
        let s = sph();
        let q = s.point_from_geodetic(0.2, 2.0);
        let d = partition_destination(&s, &q, -15.0, -5.0, 0.0).unwrap();
        assert_relative_eq!(d.z, -5.0, epsilon = 1e-9);
        assert_relative_eq!(d.y.atan2(d.x), 2.0, epsilon = 1e-12);
        assert!(s.implicit(&d).abs() < 1e-12);
        let q = s.point_from_geodetic(-1.2, -1.0);
        let d = partition_destination(&s, &q, -5.0, 5.0, 0.0).unwrap();
        assert_relative_eq!(d.z, -5.0, epsilon = 1e-9);
        assert_relative_eq!(d.y.atan2(d.x), -1.0, epsilon = 1e-12);
        let q = s.point_from_geodetic(0.0, 0.0);
        assert!(partition_destination(&s, &q, -5.0, 5.0, 0.0).is_none());
    }

    #[test]
    fn surface_transfer_signs() {
        let c = cfg();
        // At tier-0 height, ordered to tier 1: climb.
        let (agent, nrm) = above(0.5, 0.5, 5.0);
        let cmd = surface_transfer_control(&c, &agent, tier_height(&c, 1), &nrm).unwrap();
        let v = global(&agent, &cmd);
        assert_relative_eq!(v, c.max_speed * nrm.direction, epsilon = 1e-9);
        assert_eq!(cmd.velocity.angular, Vec3::zeros());
        // At tier-1 height, ordered back to tier 0: descend.
        let (agent, nrm) = above(0.5, 0.5, 15.0);
        let cmd = surface_transfer_control(&c, &agent, tier_height(&c, 0), &nrm).unwrap();
        assert_relative_eq!(global(&agent, &cmd), -c.max_speed * nrm.direction, epsilon = 1e-9);
        // On target.
        let (agent, nrm) = above(0.5, 0.5, 15.0);
        let cmd = surface_transfer_control(&c, &agent, nrm.length, &nrm).unwrap();
        assert_eq!(cmd.velocity.linear, Vec3::zeros());
    }
}
