//! Scenario orchestration: the fixed-step loop, intruder spawning, metrics,
//! precondition checks and the event log.

mod checks;
mod events;
mod scenario;
mod sim;
mod spawn;

pub use checks::{
    check_theorems, p_max_bound, return_time, AvoidanceCheck, CapacityCheck, CheckerReport, InterceptionCheck,
    ScheduleCheck, Verdict,
};
pub use events::{validate_log, ConformanceSummary, Event, EventKind};
pub use scenario::{
    AgentsSection, IntrudersSection, OutputsSection, Scenario, ScenarioError, SensorSection, SimulationSection,
    SpheroidSection,
};
pub use sim::{run, Agent, MetricsRow, ParticleOutcome, RunOutput, SimError, Simulation};
pub use spawn::{sample_surface_point, spawn_intruder, SpawnError};
