//! Rigid-body kinematics with 3-2-1 Euler angles.

use crate::geometry::Vec3;
use crate::quad::wrap_pi;
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

/// Pitch is kept this far away from ±π/2 where the Euler-rate map is singular.
pub const THETA_LIMIT: f64 = FRAC_PI_2 - 1e-3;

/// Largest Euler-angle change allowed in one integration sub-step.
const MAX_ANGLE_STEP: f64 = 0.2;
const MAX_SUBSTEPS: usize = 64;

/// Pose of an agent: position and Euler angles `(Φ, Θ, Ψ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: Vec3,
    pub euler: Vec3,
}

/// Body-frame linear `(u, v, w)` and angular `(q, r, s)` velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyVelocity {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl BodyVelocity {
    pub fn zero() -> Self {
        Self::default()
    }
}

/// Result of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: AgentState,
    /// Pitch hit the clamp during the step.
    pub clamped: bool,
}

impl AgentState {
    pub fn new(position: Vec3, euler: Vec3) -> Self {
        let mut s = Self { position, euler };
        s.normalize();
        s
    }

    /// Clamp pitch and wrap roll and yaw. Returns true if pitch was clamped.
    pub fn normalize(&mut self) -> bool {
        let clamped = self.euler.y.abs() > THETA_LIMIT;
        self.euler.x = wrap_pi(self.euler.x);
        self.euler.y = self.euler.y.clamp(-THETA_LIMIT, THETA_LIMIT);
        self.euler.z = wrap_pi(self.euler.z);
        clamped
    }

    /// Body x-axis (sensor boresight) in the global frame.
    pub fn boresight(&self) -> Vec3 {
        let (st, ct) = self.euler.y.sin_cos();
        let (sp, cp) = self.euler.z.sin_cos();
        Vec3::new(cp * ct, sp * ct, -st)
    }
}

/// Physical, sensing and control parameters shared by every agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    /// Radius of the agent's bounding sphere.
    pub body_radius: f64,
    /// Sensing range R.
    pub sensing_range: f64,
    /// Half-angle of the sensing cone, degrees.
    pub half_angle_deg: f64,
    /// Vertex drop-off constant η.
    pub eta: f64,
    pub k_u: f64,
    pub k_v: f64,
    pub k_w: f64,
    pub k_r: f64,
    pub k_s: f64,
    /// Saturation of the coverage yaw-plane rates, rad/s.
    pub r_max: f64,
    pub s_max: f64,
    pub max_speed: f64,
    /// Orientation-alignment gain ξ.
    pub xi: f64,
    /// Nominal altitude above the surface as a fraction of R.
    pub gamma: f64,
    /// Arrival radius ε₁.
    pub epsilon1: f64,
    /// Surface-transfer convergence threshold ε₂ on the log-altitude term.
    pub epsilon2: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            body_radius: 1.0,
            sensing_range: 10.0,
            half_angle_deg: 30.0,
            eta: 100.0,
            k_u: 1.0,
            k_v: 5.0,
            k_w: 1.0,
            k_r: 0.1,
            k_s: 0.1,
            r_max: 0.4,
            s_max: 0.4,
            max_speed: 6.0,
            xi: 0.05,
            gamma: 0.5,
            epsilon1: 10.0,
            epsilon2: 0.05,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid agent config: {0}")]
pub struct ConfigError(pub String);

impl AgentConfig {
    pub fn half_angle(&self) -> f64 {
        self.half_angle_deg.to_radians()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("body_radius", self.body_radius),
            ("sensing_range", self.sensing_range),
            ("max_speed", self.max_speed),
            ("epsilon1", self.epsilon1),
            ("epsilon2", self.epsilon2),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("k_u", self.k_u),
            ("k_v", self.k_v),
            ("k_w", self.k_w),
            ("k_r", self.k_r),
            ("k_s", self.k_s),
            ("r_max", self.r_max),
            ("s_max", self.s_max),
            ("xi", self.xi),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.half_angle_deg > 0.0 && self.half_angle_deg < 90.0) {
            return Err(ConfigError(format!(
                "half_angle_deg must lie in (0, 90), got {}",
                self.half_angle_deg
            )));
        }
        if !(self.eta >= 100.0 && self.eta.is_finite()) {
            return Err(ConfigError(format!(
                "eta must be at least 100, got {}",
                self.eta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ConfigError(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.gamma * self.sensing_range <= self.body_radius {
            return Err(ConfigError(format!(
                "nominal altitude gamma*R = {} must exceed body_radius = {}",
                self.gamma * self.sensing_range,
                self.body_radius
            )));
        }
        let gain = (self.k_u.powi(2) + self.k_v.powi(2) + self.k_w.powi(2)).sqrt();
        if gain > self.max_speed * (1.0 + 1e-12) {
            return Err(ConfigError(format!(
                "translational gain norm {gain} exceeds max_speed {}",
                self.max_speed
            )));
        }
        Ok(())
    }
}

/// Body-to-global rotation `R₁(Φ, Θ, Ψ)`.
pub fn rotation_body_to_global(euler: &Vec3) -> Matrix3<f64> {
    let (sf, cf) = euler.x.sin_cos();
    let (st, ct) = euler.y.sin_cos();
    let (sp, cp) = euler.z.sin_cos();
    Matrix3::new(
        ct * cp,
        sf * st * cp - cf * sp,
        cf * st * cp + sf * sp,
        ct * sp,
        sf * st * sp + cf * cp,
        cf * st * sp - sf * cp,
        -st,
        sf * ct,
        cf * ct,
    )
}

/// Map `R₂` from body rates `(q, r, s)` to Euler-angle rates.
pub fn euler_rate_matrix(euler: &Vec3) -> Matrix3<f64> {
    let (sf, cf) = euler.x.sin_cos();
    let (tt, sec) = (euler.y.tan(), 1.0 / euler.y.cos());
    Matrix3::new(1.0, sf * tt, cf * tt, 0.0, cf, -sf, 0.0, sf * sec, cf * sec)
}

/// Closed-form inverse of `R₂`, mapping Euler-angle rates to body rates.
pub fn euler_rate_matrix_inverse(euler: &Vec3) -> Matrix3<f64> {
    let (sf, cf) = euler.x.sin_cos();
    let (st, ct) = euler.y.sin_cos();
    Matrix3::new(1.0, 0.0, -st, 0.0, cf, sf * ct, 0.0, -sf, cf * ct)
}

fn derivative(euler: &Vec3, vel: &BodyVelocity) -> (Vec3, Vec3) {
    (
        rotation_body_to_global(euler) * vel.linear,
        euler_rate_matrix(euler) * vel.angular,
    )
}

fn rk4(state: &AgentState, vel: &BodyVelocity, h: f64) -> AgentState {
    let e0 = state.euler;
    let (k1p, k1e) = derivative(&e0, vel);
    let (k2p, k2e) = derivative(&(e0 + 0.5 * h * k1e), vel);
    let (k3p, k3e) = derivative(&(e0 + 0.5 * h * k2e), vel);
    let (k4p, k4e) = derivative(&(e0 + h * k3e), vel);
    AgentState {
        position: state.position + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        euler: e0 + h / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e),
    }
}

/// Advance the pose by `dt` holding the body velocity constant.
///
/// Classical RK4; the step is split when the Euler rates are large (near the
/// pitch clamp the yaw and roll rates scale with sec Θ).
pub fn step(state: &AgentState, vel: &BodyVelocity, dt: f64) -> StepOutcome {
    assert!(dt > 0.0, "step requires dt > 0");
    let rates = euler_rate_matrix(&state.euler) * vel.angular;
    let peak = rates.amax();
    let n = ((peak * dt / MAX_ANGLE_STEP).ceil() as usize).clamp(1, MAX_SUBSTEPS);
    let h = dt / n as f64;
    let mut s = *state;
    let mut clamped = false;
    for _ in 0..n {
        s = rk4(&s, vel, h);
        clamped |= s.normalize();
    }
    StepOutcome { state: s, clamped }
}
