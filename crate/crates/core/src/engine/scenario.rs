//! Scenario description: everything a run depends on.
//!
//! Lengths are in scenario units and speeds in units per second. Fields
//! ending in `_s` are seconds and fields ending in `_deg` are degrees.

use crate::geometry::{GeometryError, Spheroid};
use crate::intruder::{DecayConfig, NoiseModel};
use crate::kinematics::AgentConfig;
use crate::sensing::MeshConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpheroidSection {
    /// Equatorial radius.
    pub a: f64,
    /// Polar radius.
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentsSection {
    pub count: usize,
    /// Power lifespan T*.
    pub lifespan_s: f64,
    /// Target coverage level C*; the surface starts fully covered at this level.
    pub coverage_target: f64,
    pub vehicle: AgentConfig,
}

impl Default for AgentsSection {
    fn default() -> Self {
        Self { count: 4, lifespan_s: 792.0, coverage_target: 20.0, vehicle: AgentConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntrudersSection {
    pub enabled: bool,
    pub max_speed: f64,
    /// Speeds are drawn from `(min_speed_fraction·max_speed, max_speed]`.
    pub min_speed_fraction: f64,
    pub first_spawn_s: f64,
    pub spawn_period_s: f64,
    /// Flight time from spawn to the detection range.
    pub lead_time_s: f64,
    /// Half-angle of the cone of approach directions about the outward normal
    /// at the aim point.
    pub cone_half_angle_deg: f64,
    /// Interval between refreshes of each particle's decay field.
    pub decay_refresh_s: f64,
    pub decay: DecayConfig,
}

impl Default for IntrudersSection {
    fn default() -> Self {
        Self {
            enabled: true,
            max_speed: 0.7,
            min_speed_fraction: 0.3,
            first_spawn_s: 594.0,
            spawn_period_s: 35.0,
            lead_time_s: 6.0,
            cone_half_angle_deg: 75.0,
            decay_refresh_s: 1.0,
            decay: DecayConfig::default(),
        }
    }
}

/// Omnidirectional range sensor at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSection {
    /// Lower bound R_det on the distance from detection to impact; particles
    /// are detected once their range drops below `R_det + a`.
    pub detection_range: f64,
    pub sigma_range: f64,
    pub sigma_azimuth_deg: f64,
    pub sigma_polar_deg: f64,
    /// Inflation of the velocity block of the initial covariance.
    pub init_inflation: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        Self {
            detection_range: 80.0,
            sigma_range: 0.25,
            sigma_azimuth_deg: 0.5,
            sigma_polar_deg: 0.5,
            init_inflation: 1.0,
        }
    }
}

impl SensorSection {
    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            sigma_range: self.sigma_range,
            sigma_azimuth: self.sigma_azimuth_deg.to_radians(),
            sigma_polar: self.sigma_polar_deg.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub dt_s: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Permit `dt·U > R/10`, where proximity can be stepped over.
    pub allow_coarse_step: bool,
    /// Time within ε₁ of the impact point that counts as an interception.
    pub dwell_min_s: f64,
    pub mesh: MeshConfig,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            dt_s: 0.05,
            duration_s: 6000.0,
            seed: 1,
            allow_coarse_step: false,
            dwell_min_s: 1.0,
            mesh: MeshConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    /// Write every k-th step to metrics.csv.
    pub metrics_stride: usize,
    /// Coverage snapshot interval; zero disables snapshots.
    pub snapshot_interval_s: f64,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self { metrics_stride: 1, snapshot_interval_s: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub spheroid: SpheroidSection,
    #[serde(default)]
    pub agents: AgentsSection,
    #[serde(default)]
    pub intruders: IntrudersSection,
    #[serde(default)]
    pub sensor: SensorSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

fn positive(name: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::Invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::Invalid(format!("{name} must be non-negative and finite, got {v}")))
    }
}

impl Scenario {
    /// Baseline configuration: four agents over an 80 × 20 spheroid with intruders from t = 594 s.
    pub fn baseline() -> Self {
        Self {
            spheroid: SpheroidSection { a: 80.0, c: 20.0 },
            agents: AgentsSection::default(),
            intruders: IntrudersSection::default(),
            sensor: SensorSection::default(),
            simulation: SimulationSection::default(),
            outputs: OutputsSection::default(),
        }
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)
            .map_err(|e| ScenarioError::Parse { path: origin.to_string(), message: e.to_string() })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read { path: name.clone(), source })?;
        Self::from_toml(&text, &name)
    }

    /// Every field, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn spheroid(&self) -> Result<Spheroid, GeometryError> {
        Spheroid::new(self.spheroid.a, self.spheroid.c)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.spheroid().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let ag = &self.agents;
        if ag.count == 0 {
            return Err(ScenarioError::Invalid("agents.count must be at least 1".into()));
        }
        positive("agents.lifespan_s", ag.lifespan_s)?;
        positive("agents.coverage_target", ag.coverage_target)?;
        ag.vehicle.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let it = &self.intruders;
        positive("intruders.max_speed", it.max_speed)?;
        if !(it.min_speed_fraction > 0.0 && it.min_speed_fraction <= 1.0) {
            return Err(ScenarioError::Invalid("intruders.min_speed_fraction must lie in (0, 1]".into()));
        }
        non_negative("intruders.first_spawn_s", it.first_spawn_s)?;
        positive("intruders.spawn_period_s", it.spawn_period_s)?;
        non_negative("intruders.lead_time_s", it.lead_time_s)?;
        if !(it.cone_half_angle_deg > 0.0 && it.cone_half_angle_deg < 90.0) {
            return Err(ScenarioError::Invalid("intruders.cone_half_angle_deg must lie in (0, 90)".into()));
        }
        positive("intruders.decay_refresh_s", it.decay_refresh_s)?;
        non_negative("intruders.decay.lambda", it.decay.lambda)?;
        non_negative("intruders.decay.pad", it.decay.pad)?;
        positive("intruders.decay.cutoff", it.decay.cutoff)?;
        if it.decay.min_nodes < 2 || it.decay.max_nodes < it.decay.min_nodes {
            return Err(ScenarioError::Invalid("intruders.decay needs 2 <= min_nodes <= max_nodes".into()));
        }

        let se = &self.sensor;
        positive("sensor.detection_range", se.detection_range)?;
        non_negative("sensor.sigma_range", se.sigma_range)?;
        non_negative("sensor.sigma_azimuth_deg", se.sigma_azimuth_deg)?;
        non_negative("sensor.sigma_polar_deg", se.sigma_polar_deg)?;
        if !(se.init_inflation >= 1.0 && se.init_inflation.is_finite()) {
            return Err(ScenarioError::Invalid("sensor.init_inflation must be at least 1".into()));
        }

        let sim = &self.simulation;
        positive("simulation.dt_s", sim.dt_s)?;
        non_negative("simulation.duration_s", sim.duration_s)?;
        non_negative("simulation.dwell_min_s", sim.dwell_min_s)?;
        let v = &ag.vehicle;
        if sim.dt_s * v.max_speed > v.sensing_range / 10.0 && !sim.allow_coarse_step {
            return Err(ScenarioError::Invalid(format!(
                "dt·U = {} exceeds R/10 = {}; agents can cross the proximity radius within a few steps \
                 (set simulation.allow_coarse_step to run anyway)",
                sim.dt_s * v.max_speed,
                v.sensing_range / 10.0
            )));
        }
        if self.outputs.metrics_stride == 0 {
            return Err(ScenarioError::Invalid("outputs.metrics_stride must be at least 1".into()));
        }
        non_negative("outputs.snapshot_interval_s", self.outputs.snapshot_interval_s)?;
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.simulation.duration_s / self.simulation.dt_s + 1e-9).floor() as u64
    }
}
