//! Interception, scheduling and avoidance conditions evaluated from the
//! scenario alone.

use super::scenario::Scenario;
use crate::geometry::{SurfaceFamily, Spheroid};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Terms kept in the perimeter-factor series. The tail bound at the baseline tiers
/// is far below 1e−15.
const SERIES_TERMS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterceptionCheck {
    /// `R_det / U_int`.
    pub detection_time: f64,
    pub p_max: f64,
    /// `P_max / U_agt`.
    pub travel_time: f64,
    pub margin: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleCheck {
    /// `T* / N`.
    pub window: f64,
    /// Half-meridian flight time on C₀, `T_rtb`.
    pub return_time: f64,
    /// Detection-to-impact time: the guaranteed minimum `R_det/U_int` and the
    /// geometric worst case `(R_det + 2a)/U_min`.
    pub detection_to_impact: [f64; 2],
    /// `window − (t_ck − t_dk) − T_rtb` at both ends of the range.
    pub margin: [f64; 2],
    pub verdict: Verdict,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceCheck {
    /// Proximity radius R, the smallest separation at which a deadlock group forms.
    pub trigger_distance: f64,
    /// `2𝓇ᵢ + 2𝓇ⱼ`.
    pub required: f64,
    pub margin: f64,
    /// Separation still guaranteed when two agents close at full speed for one step.
    pub stepped_trigger_distance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityCheck {
    /// Length of the moving window `P_max / U_agt`.
    pub window: f64,
    /// Agents available to intercept, `N − 1`.
    pub interceptors: usize,
    /// Impacts expected in one window at the nominal spawn rate.
    pub nominal_impacts: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckerReport {
    pub interception: InterceptionCheck,
    pub schedule: ScheduleCheck,
    pub avoidance: AvoidanceCheck,
    pub capacity: CapacityCheck,
}

impl CheckerReport {
    pub fn overall(&self) -> Verdict {
        [self.interception.verdict, self.schedule.verdict, self.avoidance.verdict, self.capacity.verdict]
            .into_iter()
            .max_by_key(|v| *v as u8)
            .unwrap()
    }
}

fn family(sc: &Scenario, s: Spheroid) -> SurfaceFamily {
    let v = &sc.agents.vehicle;
    SurfaceFamily::new(s, v.gamma, v.sensing_range, sc.agents.count)
}

/// Worst-case path length to any impact point: half the equator and half the
/// meridian of the outermost tier, plus the climbs to it and back.
pub fn p_max_bound(sc: &Scenario) -> f64 {
    let s = sc.spheroid().expect("validated scenario");
    let n = sc.agents.count;
    let outer = family(sc, s).surface(n - 1);
    let (x, z) = (outer.equatorial_radius(), outer.polar_radius());
    let g = outer.perimeter_factor(SERIES_TERMS).value;
    PI * x + 0.5 * PI * (x + z) * g + 2.0 * (n as f64 - 1.0) * sc.agents.vehicle.sensing_range
}

/// Time for the power-critical agent to fly home along a meridian of C₀.
pub fn return_time(sc: &Scenario) -> f64 {
    let s = sc.spheroid().expect("validated scenario");
    let c0 = family(sc, s).surface(0);
    let g = c0.perimeter_factor(SERIES_TERMS).value;
    PI * g / (2.0 * sc.agents.vehicle.max_speed) * (c0.equatorial_radius() + c0.polar_radius())
}

pub fn check_theorems(sc: &Scenario) -> CheckerReport {
    let v = &sc.agents.vehicle;
    let it = &sc.intruders;
    let r_det = sc.sensor.detection_range;
    let n = sc.agents.count;

    let p_max = p_max_bound(sc);
    let detection_time = r_det / it.max_speed;
    let travel_time = p_max / v.max_speed;
    let margin = detection_time - travel_time;
    let interception = InterceptionCheck {
        detection_time,
        p_max,
        travel_time,
        margin,
        verdict: if margin > 0.0 { Verdict::Pass } else { Verdict::Fail },
    };

    let window = sc.agents.lifespan_s / n as f64;
    let t_rtb = return_time(sc);
    let worst = (r_det + 2.0 * sc.spheroid.a) / (it.min_speed_fraction * it.max_speed);
    let range = [detection_time, worst];
    let m = [window - range[0] - t_rtb, window - range[1] - t_rtb];
    let (verdict, note) = if m[1] >= 0.0 {
        (Verdict::Pass, "holds for every detection-to-impact time the spawner can produce".to_string())
    } else if m[0] < 0.0 {
        (Verdict::Fail, "fails even for the fastest possible particle".to_string())
    } else {
        (
            Verdict::Warn,
            "holds for fast particles only; detection-to-impact time has no upper bound in general".to_string(),
        )
    };
    let schedule = ScheduleCheck { window, return_time: t_rtb, detection_to_impact: range, margin: m, verdict, note };

    let required = 4.0 * v.body_radius;
    let trigger = v.sensing_range;
    let avoidance = AvoidanceCheck {
        trigger_distance: trigger,
        required,
        margin: trigger - required,
        stepped_trigger_distance: trigger - 2.0 * v.max_speed * sc.simulation.dt_s,
        verdict: if trigger > required { Verdict::Pass } else { Verdict::Fail },
    };

    let cap_window = p_max / v.max_speed;
    let interceptors = n.saturating_sub(1);
    let nominal_impacts = if it.enabled { cap_window / it.spawn_period_s } else { 0.0 };
    let capacity = CapacityCheck {
        window: cap_window,
        interceptors,
        nominal_impacts,
        verdict: if nominal_impacts <= interceptors as f64 { Verdict::Pass } else { Verdict::Warn },
    };

    CheckerReport { interception, schedule, avoidance, capacity }
}
