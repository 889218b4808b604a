//! Per-agent discrete state machine: modes, guards, resets, power index,
//! particle assignment and deadlock priority.

use crate::geometry::Vec3;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "LC")]
    LocalCoverage,
    #[serde(rename = "RTB")]
    ReturnToBase,
    #[serde(rename = "PIM")]
    ParticleIntercept,
    #[serde(rename = "PTM")]
    PartitionTransfer,
    #[serde(rename = "STM")]
    SurfaceTransfer,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::LocalCoverage,
        Mode::ReturnToBase,
        Mode::ParticleIntercept,
        Mode::PartitionTransfer,
        Mode::SurfaceTransfer,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::LocalCoverage => "LC",
            Mode::ReturnToBase => "RTB",
            Mode::ParticleIntercept => "PIM",
            Mode::PartitionTransfer => "PTM",
            Mode::SurfaceTransfer => "STM",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

use Mode::*;

/// The fifteen allowed transitions.
pub const EDGES: [(Mode, Mode); 15] = [
    (LocalCoverage, ReturnToBase),
    (LocalCoverage, ParticleIntercept),
    (LocalCoverage, PartitionTransfer),
    (LocalCoverage, SurfaceTransfer),
    (ReturnToBase, PartitionTransfer),
    (ParticleIntercept, LocalCoverage),
    (ParticleIntercept, ReturnToBase),
    (ParticleIntercept, PartitionTransfer),
    (ParticleIntercept, SurfaceTransfer),
    (PartitionTransfer, LocalCoverage),
    (PartitionTransfer, ParticleIntercept),
    (PartitionTransfer, SurfaceTransfer),
    (SurfaceTransfer, LocalCoverage),
    (SurfaceTransfer, ParticleIntercept),
    (SurfaceTransfer, PartitionTransfer),
];

pub fn is_edge(from: Mode, to: Mode) -> bool {
    EDGES.contains(&(from, to))
}

/// `i_p = 1 + mod(i − 2 − ⌊tN/T*⌋, N)` for 1-based agent index `i`.
pub fn power_index(i: usize, t: f64, n: usize, t_star: f64) -> usize {
    let shift = (t * n as f64 / t_star).floor() as i64;
    1 + (i as i64 - 2 - shift).rem_euclid(n as i64) as usize
}

/// Discrete state of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDiscrete {
    pub mode: Mode,
    /// Particle assignment flag `f_i`.
    pub flag: bool,
    /// Set while the agent is power critical (`i_p = 1`). Kept apart from
    /// `flag` so the assignment guards keep their meaning.
    pub critical: bool,
    /// Surface tier `μ_i`.
    pub mu: usize,
    /// Time since the last deployment.
    pub t_f: f64,
    pub particle: Option<usize>,
    /// Current destination `p_id` (impact point or partition boundary).
    pub destination: Option<Vec3>,
    /// Estimated impact time of the assigned particle.
    pub t_ck: Option<f64>,
}

impl AgentDiscrete {
    /// Freshly deployed from the station.
    pub fn deployed() -> Self {
        Self {
            mode: PartitionTransfer,
            flag: false,
            critical: false,
            mu: 0,
            t_f: 0.0,
            particle: None,
            destination: None,
            t_ck: None,
        }
    }

    /// Remaining power relative to the lifespan, `T*/t_F`; the domain of
    /// every mode requires it to stay at or above one.
    pub fn power_ratio(&self, t_star: f64) -> f64 {
        if self.t_f <= 0.0 {
            f64::INFINITY
        } else {
            t_star / self.t_f
        }
    }
}

/// Where an agent stands in the current proximity graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Proximity {
    /// No other agent within R.
    Clear,
    /// In a deadlock group and allowed to proceed.
    Priority,
    /// In a deadlock group and must climb.
    Yield,
}

/// Everything the guards read about one agent, from a frozen snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GuardView {
    pub t: f64,
    pub power_index: usize,
    /// z of the agent's foot point on the base surface.
    pub z: f64,
    /// `(lower, upper)` of the agent's band, `None` for `i_p = 1`.
    pub band: Option<(f64, f64)>,
    /// `‖p_i − proj_{C_μ}(p_id)‖`, `None` without a destination.
    pub dest_distance: Option<f64>,
    /// `‖p_i − F‖`.
    pub station_distance: f64,
    /// Log-altitude term for the agent's current tier.
    pub log_altitude: f64,
    pub proximity: Proximity,
    /// Time a critical agent needs to fly home, `T_rtb`.
    pub return_time: f64,
    pub t_star: f64,
    pub epsilon1: f64,
    pub epsilon2: f64,
    /// Slack for comparisons against the clock, half a step.
    pub clock_tolerance: f64,
}

impl GuardView {
    fn in_band(&self) -> bool {
        self.band.is_some_and(|(lo, hi)| lo <= self.z && self.z <= hi)
    }

    fn out_of_band(&self) -> bool {
        self.band.is_some_and(|(lo, hi)| self.z < lo || self.z > hi)
    }

    fn critical(&self) -> bool {
        self.power_index == 1
    }

    fn must_return(&self, a: &AgentDiscrete) -> bool {
        a.t_f >= self.t_star - self.return_time
    }

    fn near_destination(&self) -> bool {
        self.dest_distance.is_some_and(|d| d <= self.epsilon1)
    }

    fn far_from_destination(&self) -> bool {
        self.dest_distance.is_some_and(|d| d > self.epsilon1)
    }

    fn converged(&self) -> bool {
        self.log_altitude.abs() < self.epsilon2
    }

    fn past_impact(&self, a: &AgentDiscrete) -> bool {
        a.t_ck.is_some_and(|t| self.t >= t)
    }

    /// Arrived above the destination on a raised tier with nobody within R.
    /// Dropping while a lower agent is still close would put it back in the
    /// way of the agent it just climbed over.
    fn descend(&self, a: &AgentDiscrete) -> bool {
        self.near_destination() && self.proximity == Proximity::Clear && a.mu > 0
    }
}

/// Reset assignments that accompany a transition.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Resets {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_f: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    pub from: Mode,
    pub to: Mode,
    pub resets: Resets,
    pub context: ResetContext,
}

/// Guard predicate for one edge.
pub fn guard(from: Mode, to: Mode, a: &AgentDiscrete, v: &GuardView) -> bool {
    let deadlock = v.proximity == Proximity::Yield;
    match (from, to) {
        (LocalCoverage, ReturnToBase) => v.critical() && v.must_return(a),
        (LocalCoverage, ParticleIntercept) | (PartitionTransfer, ParticleIntercept) => {
            a.flag && a.particle.is_some() && v.far_from_destination()
        }
        // Partition transfer is only for agents without a particle.
        (LocalCoverage, PartitionTransfer) => !v.critical() && !a.flag && v.out_of_band(),
        (LocalCoverage, SurfaceTransfer) => deadlock,
        (ReturnToBase, PartitionTransfer) => {
            v.station_distance <= v.epsilon1 && a.t_f >= v.t_star - v.clock_tolerance
        }
        (ParticleIntercept, LocalCoverage) => {
            let released = v.past_impact(a)
                && ((!v.critical() && v.in_band()) || (v.critical() && !v.must_return(a)));
            let explore = !v.past_impact(a) && v.near_destination() && a.mu == 0;
            released || explore
        }
        (ParticleIntercept, ReturnToBase) => {
            v.near_destination() && a.mu == 0 && v.past_impact(a) && v.critical() && v.must_return(a)
        }
        (ParticleIntercept, PartitionTransfer) => {
            v.near_destination() && a.mu == 0 && v.past_impact(a) && !v.critical() && v.out_of_band()
        }
        (ParticleIntercept, SurfaceTransfer) | (PartitionTransfer, SurfaceTransfer) => {
            deadlock || v.descend(a)
        }
        (PartitionTransfer, LocalCoverage) => v.critical() || v.in_band(),
        (SurfaceTransfer, LocalCoverage) => {
            !a.flag && v.converged() && (v.critical() || v.in_band())
        }
        (SurfaceTransfer, ParticleIntercept) => a.flag && v.converged(),
        (SurfaceTransfer, PartitionTransfer) => {
            !a.flag && v.converged() && !v.critical() && v.out_of_band()
        }
        _ => false,
    }
}

/// Inputs of the reset map beyond the current tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResetContext {
    /// `t ≥ t_ck` for the assigned particle.
    pub past_impact: bool,
    /// Arrived above the destination on a raised tier with the way clear.
    pub descend: bool,
}

impl ResetContext {
    pub fn of(a: &AgentDiscrete, v: &GuardView) -> Self {
        Self { past_impact: v.past_impact(a), descend: v.descend(a) }
    }
}

/// Reset map of an edge given the tier before the transition.
pub fn reset_map(from: Mode, to: Mode, mu: usize, ctx: ResetContext) -> Resets {
    let mut r = Resets::default();
    match (from, to) {
        (LocalCoverage, ParticleIntercept) | (PartitionTransfer, ParticleIntercept) => r.flag = Some(true),
        (LocalCoverage, SurfaceTransfer) => r.mu = Some(mu + 1),
        (ReturnToBase, PartitionTransfer) => r.t_f = Some(0.0),
        (ParticleIntercept, LocalCoverage) => r.flag = Some(!ctx.past_impact),
        (ParticleIntercept, ReturnToBase) | (ParticleIntercept, PartitionTransfer) => r.flag = Some(false),
        (ParticleIntercept, SurfaceTransfer) | (PartitionTransfer, SurfaceTransfer) => {
            r.mu = Some(if ctx.descend { 0 } else { mu + 1 })
        }
        (SurfaceTransfer, LocalCoverage) => r.mu = Some(0),
        _ => {}
    }
    r
}

/// Reset map of an edge, evaluated on the state before the transition.
pub fn resets(from: Mode, to: Mode, a: &AgentDiscrete, v: &GuardView) -> Resets {
    reset_map(from, to, a.mu, ResetContext::of(a, v))
}

/// Outgoing edges of each mode in priority order: collision avoidance, then
/// return to base, then interception, then partition transfer, then local
/// coverage.
fn priority(from: Mode) -> &'static [Mode] {
    match from {
        LocalCoverage => &[SurfaceTransfer, ReturnToBase, ParticleIntercept, PartitionTransfer],
        ReturnToBase => &[PartitionTransfer],
        ParticleIntercept => &[SurfaceTransfer, ReturnToBase, PartitionTransfer, LocalCoverage],
        PartitionTransfer => &[SurfaceTransfer, ParticleIntercept, LocalCoverage],
        SurfaceTransfer => &[ParticleIntercept, PartitionTransfer, LocalCoverage],
    }
}

/// Highest-priority enabled transition out of the agent's mode.
pub fn eval_guards(a: &AgentDiscrete, v: &GuardView) -> Option<Transition> {
    priority(a.mode)
        .iter()
        .find(|&&to| guard(a.mode, to, a, v))
        .map(|&to| Transition {
            from: a.mode,
            to,
            resets: resets(a.mode, to, a, v),
            context: ResetContext::of(a, v),
        })
}

/// Every enabled outgoing edge, for diagnostics.
pub fn enabled_edges(a: &AgentDiscrete, v: &GuardView) -> Vec<Mode> {
    priority(a.mode).iter().copied().filter(|&to| guard(a.mode, to, a, v)).collect()
}

/// Apply a transition and its resets. Leaving an assignment clears the
/// particle and its destination.
pub fn apply(a: &mut AgentDiscrete, tr: &Transition) {
    debug_assert_eq!(a.mode, tr.from);
    a.mode = tr.to;
    if let Some(f) = tr.resets.flag {
        a.flag = f;
        if !f {
            a.particle = None;
            a.t_ck = None;
            a.destination = None;
        }
    }
    if let Some(mu) = tr.resets.mu {
        a.mu = mu;
    }
    if let Some(t) = tr.resets.t_f {
        a.t_f = t;
    }
}

/// An agent considered for a new particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub power_index: usize,
    pub flag: bool,
    pub z: f64,
    /// Latest impact time the agent can still serve and get home before its
    /// lifespan runs out.
    pub deadline: f64,
}

/// Eligible agent (`i_p ≠ 1`, `f_i = 0`, impact before its deadline) whose
/// height is closest to the impact height. Ties go to the lower index.
/// `None` defers the assignment.
pub fn assign_particle(candidates: &[Candidate], impact_z: f64, impact_time: f64) -> Option<usize> {
    candidates
        .iter()
        .filter(|c| c.power_index != 1 && !c.flag && impact_time <= c.deadline)
        .min_by(|a, b| {
            (a.z - impact_z)
                .abs()
                .total_cmp(&(b.z - impact_z).abs())
                .then(a.index.cmp(&b.index))
        })
        .map(|c| c.index)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeadlockGroup {
    pub members: Vec<usize>,
    pub priority: usize,
}

/// Connected components of the graph joining agents within `radius`, each
/// with the member longest since deployment as priority (ties to the lower
/// index). Entries are `(position, tier)`; `None` entries are docked agents
/// and take no part.
pub fn detect_deadlock(positions: &[Option<(Vec3, usize)>], t_f: &[f64], radius: f64) -> Vec<DeadlockGroup> {
    let n = positions.len();
    let mut group = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if positions[start].is_none() || group[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        group[start] = id;
        let mut k = 0;
        while k < members.len() {
            let i = members[k];
            let (pi, _) = positions[i].unwrap();
            for j in 0..n {
                if group[j] == usize::MAX {
                    if let Some((pj, _)) = positions[j] {
                        if (pi - pj).norm() <= radius {
                            group[j] = id;
                            members.push(j);
                        }
                    }
                }
            }
            k += 1;
        }
        members.sort_unstable();
        let priority = *members
            .iter()
            .max_by(|&&a, &&b| t_f[a].total_cmp(&t_f[b]).then(b.cmp(&a)))
            .unwrap();
        out.push(DeadlockGroup { members, priority });
    }
    out.retain(|g| g.members.len() > 1);
    out
}

fn outranks(j: usize, i: usize, t_f: &[f64]) -> bool {
    t_f[j] > t_f[i] || (t_f[j] == t_f[i] && j < i)
}

/// Proximity status of every agent given the deadlock groups. A member yields
/// when a higher-priority agent within `radius` sits on its tier or above;
/// one that has already climbed past every such neighbor may proceed, which
/// keeps it from climbing again over the agent it just gave way to.
pub fn proximity(
    positions: &[Option<(Vec3, usize)>],
    t_f: &[f64],
    radius: f64,
    groups: &[DeadlockGroup],
) -> Vec<Proximity> {
    let mut out = vec![Proximity::Clear; positions.len()];
    for g in groups {
        for &m in &g.members {
            let (pm, mu) = positions[m].unwrap();
            let blocked = g.members.iter().any(|&j| {
                let (pj, mj) = positions[j].unwrap();
                j != m && outranks(j, m, t_f) && mj >= mu && (pm - pj).norm() <= radius
            });
            out[m] = if blocked { Proximity::Yield } else { Proximity::Priority };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view() -> GuardView {
        GuardView {
            t: 100.0,
            power_index: 3,
            z: 0.0,
            band: Some((-5.0, 5.0)),
            dest_distance: None,
            station_distance: 100.0,
            log_altitude: 0.0,
            proximity: Proximity::Clear,
            return_time: 30.98,
            t_star: 792.0,
            epsilon1: 10.0,
            epsilon2: 0.05,
            clock_tolerance: 0.025,
        }
    }

    fn agent(mode: Mode) -> AgentDiscrete {
        AgentDiscrete { mode, ..AgentDiscrete::deployed() }
    }

    #[test]
    fn power_index_examples() {
        assert_eq!(power_index(1, 0.0, 4, 792.0), 4);
        assert_eq!(power_index(2, 198.0, 4, 792.0), 4);
        assert_eq!(power_index(1, 600.0, 4, 792.0), 1);
        for t in [0.0, 100.0, 250.0, 700.0, 1000.0, 5999.0] {
            let mut ids: Vec<usize> = (1..=4).map(|i| power_index(i, t, 4, 792.0)).collect();
            ids.sort();
            assert_eq!(ids, vec![1, 2, 3, 4]);
        }
    }

    #[test]
    fn edge_set_is_closed() {
        for from in Mode::ALL {
            for &to in priority(from) {
                assert!(is_edge(from, to), "{from} -> {to}");
            }
        }
        let listed: usize = Mode::ALL.iter().map(|&m| priority(m).len()).sum();
        assert_eq!(listed, EDGES.len());
        assert!(!is_edge(ReturnToBase, SurfaceTransfer));
    }

    #[test]
    fn critical_agent_returns() {
        let mut a = agent(LocalCoverage);
        a.t_f = 792.0 - 30.0;
        let v = GuardView { power_index: 1, band: None, ..view() };
        let tr = eval_guards(&a, &v).unwrap();
        assert_eq!((tr.from, tr.to), (LocalCoverage, ReturnToBase));
        a.t_f = 700.0;
        assert!(eval_guards(&a, &v).is_none());
    }

    #[test]
    fn release_after_impact() {
        let mut a = agent(ParticleIntercept);
        a.flag = true;
        a.particle = Some(3);
        a.t_ck = Some(90.0);
        a.destination = Some(Vec3::zeros());
        let v = GuardView { dest_distance: Some(40.0), ..view() };
        let tr = eval_guards(&a, &v).unwrap();
        assert_eq!(tr.to, LocalCoverage);
        assert_eq!(tr.resets.flag, Some(false));
        apply(&mut a, &tr);
        assert!(!a.flag && a.particle.is_none());
    }

    #[test]
    fn explore_near_impact_keeps_flag() {
        let mut a = agent(ParticleIntercept);
        a.flag = true;
        a.particle = Some(0);
        a.t_ck = Some(200.0);
        let v = GuardView { dest_distance: Some(9.0), z: 30.0, ..view() };
        let tr = eval_guards(&a, &v).unwrap();
        assert_eq!(tr.to, LocalCoverage);
        assert_eq!(tr.resets.flag, Some(true));
        // Out of band but still assigned: no partition transfer from LC.
        apply(&mut a, &tr);
        assert!(eval_guards(&a, &v).is_none());
        // Wandering out of ε₁ returns to intercept.
        let v = GuardView { dest_distance: Some(11.0), ..v };
        assert_eq!(eval_guards(&a, &v).unwrap().to, ParticleIntercept);
    }

    #[test]
    fn surface_transfer_returns() {
        let mut a = agent(SurfaceTransfer);
        a.flag = true;
        a.mu = 1;
        let v = GuardView { log_altitude: 0.01, ..view() };
        assert_eq!(eval_guards(&a, &v).unwrap().to, ParticleIntercept);
        let v = GuardView { log_altitude: 0.2, ..view() };
        assert!(eval_guards(&a, &v).is_none());
        a.flag = false;
        let v = GuardView { log_altitude: 0.01, ..view() };
        let tr = eval_guards(&a, &v).unwrap();
        assert_eq!((tr.to, tr.resets.mu), (LocalCoverage, Some(0)));
    }

    #[test]
    fn deadlock_climbs_and_descends() {
        let mut a = agent(ParticleIntercept);
        a.flag = true;
        a.t_ck = Some(500.0);
        let v = GuardView { proximity: Proximity::Yield, dest_distance: Some(50.0), ..view() };
        let tr = eval_guards(&a, &v).unwrap();
        assert_eq!((tr.to, tr.resets.mu), (SurfaceTransfer, Some(1)));
        a.mu = 1;
        let v = GuardView { proximity: Proximity::Clear, dest_distance: Some(5.0), ..view() };
        let tr = eval_guards(&a, &v).unwrap();
        assert_eq!((tr.to, tr.resets.mu), (SurfaceTransfer, Some(0)));
    }

    #[test]
    fn station_redeploy() {
        let mut a = agent(ReturnToBase);
        a.t_f = 791.99;
        let v = GuardView { station_distance: 0.0, power_index: 1, band: None, ..view() };
        let tr = eval_guards(&a, &v).unwrap();
        assert_eq!(tr.to, PartitionTransfer);
        apply(&mut a, &tr);
        assert_eq!(a.t_f, 0.0);
    }

    #[test]
    fn assignment_examples() {
        let c = |index, power_index, z| Candidate { index, power_index, flag: false, z, deadline: 1e3 };
        let agents = [c(0, 2, 25.0), c(1, 3, 0.0), c(2, 4, -10.0), c(3, 1, -25.0)];
        assert_eq!(assign_particle(&agents, -20.0, 700.0), Some(2));
        let tie = [c(0, 2, 5.0), c(1, 3, -5.0)];
        assert_eq!(assign_particle(&tie, 0.0, 700.0), Some(0));
        let busy = [Candidate { flag: true, ..c(0, 2, 0.0) }, c(1, 1, 0.0)];
        assert_eq!(assign_particle(&busy, 0.0, 700.0), None);
        // Too late for the nearest agent: the next one takes it.
        let late = [Candidate { deadline: 650.0, ..c(0, 2, 0.0) }, c(1, 3, 10.0)];
        assert_eq!(assign_particle(&late, 0.0, 700.0), Some(1));
    }

    #[test]
    fn deadlock_groups() {
        let p = |x: f64| Some((Vec3::new(x, 0.0, 0.0), 0));
        assert!(detect_deadlock(&[p(0.0), p(10.1)], &[100.0, 50.0], 10.0).is_empty());
        let g = detect_deadlock(&[p(0.0), p(10.0)], &[100.0, 50.0], 10.0);
        assert_eq!(g, vec![DeadlockGroup { members: vec![0, 1], priority: 0 }]);
        let g = detect_deadlock(&[p(0.0), p(4.0), p(8.0), None], &[10.0, 30.0, 20.0, 99.0], 10.0);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].priority, 1);
        let pos = [p(0.0), p(4.0), p(8.0), None];
        let prox = proximity(&pos, &[10.0, 30.0, 20.0, 99.0], 10.0, &g);
        assert_eq!(prox, vec![Proximity::Yield, Proximity::Priority, Proximity::Yield, Proximity::Clear]);
        // Equal times: lower index proceeds.
        let g = detect_deadlock(&[p(0.0), p(1.0)], &[5.0, 5.0], 10.0);
        assert_eq!(g[0].priority, 0);
        // A yielder one tier above the agent it gave way to stays put.
        let pos = [p(0.0), Some((Vec3::new(1.0, 0.0, 0.0), 1))];
        let g = detect_deadlock(&pos, &[5.0, 1.0], 10.0);
        assert_eq!(g.len(), 1);
        assert_eq!(proximity(&pos, &[5.0, 1.0], 10.0, &g), vec![Proximity::Priority; 2]);
    }
}
