//! Event log records and the transition-log validator.

use crate::automaton::{is_edge, reset_map, Mode, ResetContext};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: u64,
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Deploy {
        agent: usize,
    },
    Spawn {
        particle: usize,
        impact_time: f64,
        impact_point: [f64; 3],
        speed: f64,
    },
    Detect {
        particle: usize,
        range: f64,
    },
    /// First impact prediction from the particle's estimate.
    Predict {
        particle: usize,
        impact_time: f64,
        impact_point: [f64; 3],
    },
    Assign {
        particle: usize,
        agent: usize,
        impact_time: f64,
    },
    /// No agent could take the particle; retried every step.
    Defer {
        particle: usize,
    },
    Transition {
        agent: usize,
        from: Mode,
        to: Mode,
        power_index: usize,
        flag: [bool; 2],
        mu: [usize; 2],
        t_f: [f64; 2],
        context: ResetContext,
    },
    /// Assignment ended in local coverage once the impact time passed.
    Release {
        agent: usize,
        particle: usize,
    },
    Deadlock {
        members: Vec<usize>,
        priority: usize,
    },
    Intercept {
        particle: usize,
        agent: usize,
    },
    Impact {
        particle: usize,
        predicted: bool,
        intercepted: bool,
        dwell: f64,
    },
    /// More than `N − 1` impacts inside one moving window.
    CapacityWarning {
        impacts: usize,
        window: f64,
    },
    /// A pair first seen within R was already deeper inside than one fine step can close.
    ProximityViolation {
        agents: [usize; 2],
        distance: f64,
    },
    Collision {
        agents: [usize; 2],
        distance: f64,
    },
    Fault {
        class: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ConformanceSummary {
    pub transitions: usize,
    pub edge_counts: BTreeMap<String, usize>,
    pub max_mu: usize,
    pub max_t_f: f64,
}

/// Check a transition log against the automaton: every edge allowed, every
/// reset as the reset map prescribes, modes chained per agent starting from
/// partition transfer at deployment, `μ ≤ N − 1` and `t_F ≤ T*` (within `tol`).
pub fn validate_log(
    events: &[Event],
    n_agents: usize,
    t_star: f64,
    tol: f64,
) -> Result<ConformanceSummary, Vec<String>> {
    let mut errors = Vec::new();
    let mut mode: Vec<Option<Mode>> = vec![None; n_agents];
    let mut sum = ConformanceSummary::default();
    for e in events {
        match &e.kind {
            EventKind::Deploy { agent } => mode[*agent] = Some(Mode::PartitionTransfer),
            EventKind::Transition { agent, from, to, flag, mu, t_f, context, .. } => {
                let at = format!("step {} agent {}", e.step, agent);
                sum.transitions += 1;
                *sum.edge_counts.entry(format!("{from}->{to}")).or_default() += 1;
                if !is_edge(*from, *to) {
                    errors.push(format!("{at}: {from}->{to} is not an edge"));
                }
                if mode[*agent] != Some(*from) {
                    errors.push(format!("{at}: leaves {from} but was in {:?}", mode[*agent]));
                }
                mode[*agent] = Some(*to);
                let r = reset_map(*from, *to, mu[0], *context);
                if flag[1] != r.flag.unwrap_or(flag[0]) {
                    errors.push(format!("{at}: flag {:?} after {from}->{to}", flag));
                }
                if mu[1] != r.mu.unwrap_or(mu[0]) {
                    errors.push(format!("{at}: tier {:?} after {from}->{to}", mu));
                }
                let want_t = r.t_f.unwrap_or(t_f[0]);
                if (t_f[1] - want_t).abs() > tol {
                    errors.push(format!("{at}: t_F {:?} after {from}->{to}", t_f));
                }
                if mu[1] + 1 > n_agents {
                    errors.push(format!("{at}: tier {} above N-1", mu[1]));
                }
                if t_f[0] > t_star + tol {
                    errors.push(format!("{at}: t_F {} beyond the lifespan", t_f[0]));
                }
                sum.max_mu = sum.max_mu.max(mu[1]);
                sum.max_t_f = sum.max_t_f.max(t_f[0]);
            }
            EventKind::Fault { class, message } => errors.push(format!("step {}: fault {class}: {message}", e.step)),
            _ => {}
        }
    }
    if errors.is_empty() {
        Ok(sum)
    } else {
        Err(errors)
    }
}
