//! Anisotropic sensing footprint, the discretized coverage field and the
//! local coverage-gradient terms.

mod field;
mod mesh;

pub use field::{local_coverage_terms, CoverageField, LocalTerms};
pub use mesh::{Cell, MeshConfig, MeshError, SurfaceMesh};

use crate::geometry::Vec3;
use crate::kinematics::{AgentConfig, AgentState};

/// Relative position step for numerical partials, as a fraction of R.
pub const POSITION_STEP: f64 = 1e-4;
/// Angle step for numerical partials, radians.
pub const ANGLE_STEP: f64 = 1e-5;

/// Parameters of the spherical-sector footprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub range: f64,
    pub half_angle: f64,
    pub eta: f64,
}

impl SensorModel {
    pub fn from_config(cfg: &AgentConfig) -> Self {
        Self {
            range: cfg.sensing_range,
            half_angle: cfg.half_angle(),
            eta: cfg.eta,
        }
    }
}

/// The part of an agent pose the footprint depends on. Roll does not move the
/// boresight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPose {
    pub position: Vec3,
    pub theta: f64,
    pub psi: f64,
}

impl From<&AgentState> for SensorPose {
    fn from(s: &AgentState) -> Self {
        Self {
            position: s.position,
            theta: s.euler.y,
            psi: s.euler.z,
        }
    }
}

/// Sensing value together with its partials with respect to the agent
/// coordinates `(x, y, z, Θ, Ψ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingEvaluation {
    pub value: f64,
    pub partials: [f64; 5],
}

fn boresight(theta: f64, psi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    Vec3::new(cp * ct, sp * ct, -st)
}

/// A footprint with its boresight precomputed, for evaluating many targets.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Footprint {
    pub position: Vec3,
    pub axis: Vec3,
    range2: f64,
    cos_alpha: f64,
    alpha: f64,
    eta: f64,
}

impl Footprint {
    pub fn new(model: &SensorModel, pose: &SensorPose) -> Self {
        Self {
            position: pose.position,
            axis: boresight(pose.theta, pose.psi),
            range2: model.range * model.range,
            cos_alpha: model.half_angle.cos(),
            alpha: model.half_angle,
            eta: model.eta,
        }
    }

    pub fn shifted(&self, delta: Vec3) -> Self {
        Self {
            position: self.position + delta,
            ..*self
        }
    }

    pub fn rotated(&self, theta: f64, psi: f64) -> Self {
        Self {
            axis: boresight(theta, psi),
            ..*self
        }
    }

    #[inline]
    pub fn value(&self, target: &Vec3) -> f64 {
        let r = target - self.position;
        let d2 = r.norm_squared();
        if d2 <= 0.0 || d2 >= self.range2 {
            return 0.0;
        }
        let d = d2.sqrt();
        let cos_phi = r.dot(&self.axis) / d;
        if cos_phi <= self.cos_alpha {
            return 0.0;
        }
        let c2 = self.alpha - cos_phi.min(1.0).acos();
        let beta = (self.eta * d2).min(1.0);
        let c1 = beta * self.range2 - d2;
        if c1 <= 0.0 || c2 <= 0.0 {
            return 0.0;
        }
        c1 * c2 / (c1 + c2)
    }
}

/// Sensing quality `S` of the agent at `target`.
pub fn sensing_value(model: &SensorModel, pose: &SensorPose, target: &Vec3) -> f64 {
    Footprint::new(model, pose).value(target)
}

/// Central difference that falls back to a one-sided difference from the
/// interior when a step leaves the footprint.
#[inline]
fn difference(s0: f64, sp: f64, sm: f64, h: f64) -> f64 {
    if s0 <= 0.0 {
        0.0
    } else if sp > 0.0 && sm > 0.0 {
        (sp - sm) / (2.0 * h)
    } else if sp > 0.0 {
        (sp - s0) / h
    } else if sm > 0.0 {
        (s0 - sm) / h
    } else {
        0.0
    }
}

/// Perturbed footprints for the five agent coordinates, reused across targets.
pub(crate) struct Stencil {
    pub base: Footprint,
    plus: [Footprint; 5],
    minus: [Footprint; 5],
    steps: [f64; 5],
}

impl Stencil {
    pub fn new(model: &SensorModel, pose: &SensorPose, h_pos: f64, h_ang: f64) -> Self {
        let base = Footprint::new(model, pose);
        let e = [Vec3::x(), Vec3::y(), Vec3::z()];
        let plus = [
            base.shifted(e[0] * h_pos),
            base.shifted(e[1] * h_pos),
            base.shifted(e[2] * h_pos),
            base.rotated(pose.theta + h_ang, pose.psi),
            base.rotated(pose.theta, pose.psi + h_ang),
        ];
        let minus = [
            base.shifted(-e[0] * h_pos),
            base.shifted(-e[1] * h_pos),
            base.shifted(-e[2] * h_pos),
            base.rotated(pose.theta - h_ang, pose.psi),
            base.rotated(pose.theta, pose.psi - h_ang),
        ];
        Self {
            base,
            plus,
            minus,
            steps: [h_pos, h_pos, h_pos, h_ang, h_ang],
        }
    }

    pub fn default_steps(model: &SensorModel, pose: &SensorPose) -> Self {
        Self::new(model, pose, POSITION_STEP * model.range, ANGLE_STEP)
    }

    #[inline]
    pub fn evaluate(&self, target: &Vec3) -> SensingEvaluation {
        let value = self.base.value(target);
        let mut partials = [0.0; 5];
        if value > 0.0 {
            for j in 0..5 {
                let sp = self.plus[j].value(target);
                let sm = self.minus[j].value(target);
                partials[j] = difference(value, sp, sm, self.steps[j]);
            }
        }
        SensingEvaluation { value, partials }
    }
}

/// Value and numerical partials of `S` with the default steps.
pub fn sensing_partials(
    model: &SensorModel,
    pose: &SensorPose,
    target: &Vec3,
) -> SensingEvaluation {
    Stencil::default_steps(model, pose).evaluate(target)
}

/// Same as [`sensing_partials`] with explicit steps.
pub fn sensing_partials_with_steps(
    model: &SensorModel,
    pose: &SensorPose,
    target: &Vec3,
    h_pos: f64,
    h_ang: f64,
) -> SensingEvaluation {
    Stencil::new(model, pose, h_pos, h_ang).evaluate(target)
}
