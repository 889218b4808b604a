use super::checks::{p_max_bound, return_time};
use super::events::{Event, EventKind};
use super::scenario::{Scenario, ScenarioError};
use super::spawn::{spawn_intruder, SpawnError};
use crate::automaton::{
    apply, assign_particle, detect_deadlock, eval_guards, power_index, proximity, AgentDiscrete, Candidate,
    DeadlockGroup, GuardView, Mode,
};
use crate::control::{
    geodesic_control, local_coverage_control, log_altitude, partition_destination, surface_transfer_control,
    tier_height, ControlCommand, ControlError,
};
use crate::geometry::{Spheroid, SurfaceFamily, SurfaceNormal, Vec3};
use crate::intruder::{
    decay_field, ekf_init, ekf_step, measure, predict_impact, DecayMap, EkfEstimate, ImpactPrediction, NoiseModel,
    ParticleTruth,
};
use crate::kinematics::{step as integrate, AgentState};
use crate::sensing::{local_coverage_terms, CoverageField, SensorModel, SensorPose, SurfaceMesh};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

const SPAWN_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("domain fault at t = {t}: agent {agent}: {message}")]
    Domain { t: f64, agent: usize, message: String },
    #[error("surface collision fault at t = {t}: agent {agent}: {source}")]
    Surface {
        t: f64,
        agent: usize,
        #[source]
        source: ControlError,
    },
    #[error(transparent)]
    Spawn(#[from] SpawnError),
    #[error("numerical fault at t = {t}: {what}")]
    Numerical { t: f64, what: String },
}

impl SimError {
    /// Short class name used in logs and exit messages.
    pub fn class(&self) -> &'static str {
        match self {
            SimError::Scenario(_) => "scenario",
            SimError::Setup(_) => "setup",
            SimError::Domain { .. } => "domain",
            SimError::Surface { .. } => "surface-collision",
            SimError::Spawn(_) => "spawn",
            SimError::Numerical { .. } => "numerical",
        }
    }
}

/// One agent: continuous pose plus discrete state.
#[derive(Debug, Clone)]
pub struct Agent {
    pub state: AgentState,
    pub disc: AgentDiscrete,
    pub deployed: bool,
    deploy_step: u64,
}

#[derive(Debug, Clone)]
struct Particle {
    truth: ParticleTruth,
    detected: bool,
    first: Option<Vec3>,
    est: Option<EkfEstimate>,
    impact: Option<ImpactPrediction>,
    first_prediction: Option<f64>,
    assigned: Option<usize>,
    deferred: bool,
    decay: DecayMap,
    next_refresh: u64,
    dwell: f64,
    intercept_time: Option<f64>,
}

/// What happened to one particle.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ParticleOutcome {
    pub id: usize,
    pub detect_time: Option<f64>,
    pub impact_time: f64,
    /// True once the impact has happened within the run.
    pub resolved: bool,
    /// Time of the first estimate whose line meets the surface.
    pub first_prediction: Option<f64>,
    pub assigned: Option<usize>,
    pub dwell: f64,
    pub intercept_time: Option<f64>,
}

impl ParticleOutcome {
    pub fn intercepted(&self) -> bool {
        self.intercept_time.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub t: f64,
    pub e_norm: f64,
    /// Smallest distance between flying agents, −1 with fewer than two.
    pub min_dist: f64,
    pub modes: Vec<Option<Mode>>,
    /// `‖n_i‖`, NaN for agents not flying.
    pub normal: Vec<f64>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub metrics: Vec<MetricsRow>,
    pub events: Vec<Event>,
    pub field: CoverageField,
    pub particles: Vec<ParticleOutcome>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    /// The fault that halted the run, if any.
    pub fault: Option<SimError>,
}

pub struct Simulation {
    sc: Scenario,
    spheroid: Spheroid,
    family: SurfaceFamily,
    bounds: Vec<f64>,
    mesh: SurfaceMesh,
    field: CoverageField,
    model: SensorModel,
    noise: NoiseModel,
    station: Vec3,
    return_time: f64,
    capacity_window: f64,
    refresh_steps: u64,
    agents: Vec<Agent>,
    particles: Vec<Particle>,
    spawn_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    spawned: usize,
    step: u64,
    events: Vec<Event>,
    metrics: Vec<MetricsRow>,
    snapshots: Vec<(f64, Vec<f64>)>,
    impacts: VecDeque<f64>,
    close_pairs: BTreeSet<(usize, usize)>,
    colliding: BTreeSet<(usize, usize)>,
    groups: Vec<DeadlockGroup>,
    sensing: Vec<f64>,
    decay: Vec<f64>,
    scratch: Vec<usize>,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl Simulation {
    pub fn new(sc: Scenario) -> Result<Self, SimError> {
        sc.validate()?;
        let n = sc.agents.count;
        if n < 2 {
            return Err(SimError::Setup(format!("a run needs at least two agents, got {n}")));
        }
        let spheroid = sc.spheroid().map_err(|e| SimError::Setup(e.to_string()))?;
        let v = &sc.agents.vehicle;
        let family = SurfaceFamily::new(spheroid, v.gamma, v.sensing_range, n);
        let bounds = spheroid.partition_bounds(n).map_err(|e| SimError::Setup(e.to_string()))?;
        let mesh =
            SurfaceMesh::new(spheroid, &bounds, sc.simulation.mesh).map_err(|e| SimError::Setup(e.to_string()))?;
        let field = CoverageField::filled(&mesh, sc.agents.coverage_target, sc.agents.coverage_target);
        let station = Vec3::new(0.0, 0.0, family.surface(0).polar_radius());
        let agents = (0..n)
            .map(|_| Agent {
                state: AgentState::new(station, Vec3::new(0.0, FRAC_PI_2, 0.0)),
                disc: AgentDiscrete::deployed(),
                deployed: false,
                deploy_step: 0,
            })
            .collect();
        let mut spawn_rng = ChaCha8Rng::seed_from_u64(sc.simulation.seed);
        spawn_rng.set_stream(SPAWN_STREAM);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(sc.simulation.seed);
        noise_rng.set_stream(NOISE_STREAM);
        let cells = mesh.len();
        Ok(Self {
            model: SensorModel::from_config(v),
            noise: sc.sensor.noise(),
            return_time: return_time(&sc),
            capacity_window: p_max_bound(&sc) / v.max_speed,
            refresh_steps: ((sc.intruders.decay_refresh_s / sc.simulation.dt_s).round() as u64).max(1),
            sc,
            spheroid,
            family,
            bounds,
            mesh,
            field,
            station,
            agents,
            particles: Vec::new(),
            spawn_rng,
            noise_rng,
            spawned: 0,
            step: 0,
            events: Vec::new(),
            metrics: Vec::new(),
            snapshots: Vec::new(),
            impacts: VecDeque::new(),
            close_pairs: BTreeSet::new(),
            colliding: BTreeSet::new(),
            groups: Vec::new(),
            sensing: vec![0.0; cells],
            decay: vec![0.0; cells],
            scratch: Vec::new(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn field(&self) -> &CoverageField {
        &self.field
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.metrics
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.sc.simulation.dt_s
    }

    fn dt(&self) -> f64 {
        self.sc.simulation.dt_s
    }

    fn emit(&mut self, kind: EventKind) {
        self.events.push(Event { step: self.step, t: self.time(), kind });
    }

    fn t_f(&self, i: usize) -> f64 {
        (self.step - self.agents[i].deploy_step) as f64 * self.dt()
    }

    /// Flying agents: deployed and not parked in the station.
    fn flying(&self, i: usize) -> bool {
        let a = &self.agents[i];
        a.deployed
            && !(a.disc.mode == Mode::ReturnToBase
                && (a.state.position - self.station).norm() <= self.sc.agents.vehicle.body_radius)
    }

    fn normal(&self, i: usize) -> Result<SurfaceNormal, SimError> {
        self.spheroid.foot_point_normal(&self.agents[i].state.position).map_err(|e| SimError::Numerical {
            t: self.time(),
            what: format!("agent {i}: {e}"),
        })
    }

    /// Run to the scenario duration, stopping at the first fault.
    pub fn run(mut self) -> RunOutput {
        let steps = self.sc.steps();
        let mut fault = None;
        while self.step < steps {
            if let Err(e) = self.advance() {
                self.emit(EventKind::Fault { class: e.class().to_string(), message: e.to_string() });
                fault = Some(e);
                break;
            }
        }
        let resolved_by = self.time();
        let particles = self
            .particles
            .iter()
            .map(|p| ParticleOutcome {
                id: p.truth.id,
                detect_time: p.detected.then_some(p.truth.detect_time),
                impact_time: p.truth.impact_time,
                resolved: p.truth.impact_time <= resolved_by,
                first_prediction: p.first_prediction,
                assigned: p.assigned,
                dwell: p.dwell,
                intercept_time: p.intercept_time,
            })
            .collect();
        RunOutput {
            metrics: self.metrics,
            events: self.events,
            field: self.field,
            particles,
            snapshots: self.snapshots,
            fault,
        }
    }

    /// One fixed step.
    pub fn advance(&mut self) -> Result<(), SimError> {
        self.deploy_and_spawn()?;
        let normals = self.snapshot()?;
        self.track_particles()?;
        self.assign_particles(&normals);
        self.discrete_update(&normals)?;
        let commands = self.commands(&normals)?;
        self.move_agents(&commands)?;
        self.update_coverage();
        self.step += 1;
        self.record()
    }

    fn deploy_and_spawn(&mut self) -> Result<(), SimError> {
        let dt = self.dt();
        let n = self.agents.len();
        let slot = self.sc.agents.lifespan_s / n as f64;
        for i in 0..n {
            if !self.agents[i].deployed && self.step >= (i as f64 * slot / dt).round() as u64 {
                let a = &mut self.agents[i];
                a.deployed = true;
                a.deploy_step = self.step;
                a.state = AgentState::new(self.station, Vec3::new(0.0, FRAC_PI_2, 0.0));
                a.disc = AgentDiscrete::deployed();
                self.emit(EventKind::Deploy { agent: i });
            }
        }
        let it = self.sc.intruders;
        while it.enabled {
            let at = it.first_spawn_s + self.spawned as f64 * it.spawn_period_s;
            if at > self.time() + 0.5 * dt {
                break;
            }
            let id = self.spawned;
            let truth = spawn_intruder(&mut self.spawn_rng, &self.sc, id, at)?;
            self.emit(EventKind::Spawn {
                particle: id,
                impact_time: truth.impact_time,
                impact_point: arr(&truth.impact_point),
                speed: truth.velocity().norm(),
            });
            self.particles.push(Particle {
                truth,
                detected: false,
                first: None,
                est: None,
                impact: None,
                first_prediction: None,
                assigned: None,
                deferred: false,
                decay: DecayMap::default(),
                next_refresh: 0,
                dwell: 0.0,
                intercept_time: None,
            });
            self.spawned += 1;
        }
        Ok(())
    }

    fn snapshot(&self) -> Result<Vec<Option<SurfaceNormal>>, SimError> {
        (0..self.agents.len())
            .map(|i| if self.agents[i].deployed { self.normal(i).map(Some) } else { Ok(None) })
            .collect()
    }

    fn track_particles(&mut self) -> Result<(), SimError> {
        let t = self.time();
        let dt = self.dt();
        let detect_range = self.sc.sensor.detection_range + self.spheroid.equatorial_radius();
        let n = self.agents.len();
        for k in 0..self.particles.len() {
            if !self.particles[k].truth.alive {
                continue;
            }
            if t >= self.particles[k].truth.impact_time {
                self.impact(k);
                continue;
            }
            let pos = self.particles[k].truth.position_at(t);
            let noise = self.noise.sample(&mut self.noise_rng);
            let z = measure(&pos, &noise);
            let p = &mut self.particles[k];
            if !p.detected {
                if pos.norm() > detect_range {
                    continue;
                }
                p.detected = true;
                p.truth.detect_time = t;
                p.first = Some(z);
                self.emit(EventKind::Detect { particle: k, range: pos.norm() });
                continue;
            }
            let est = match (&p.est, &p.first) {
                (Some(est), _) => ekf_step(est, Some(&z), dt, &self.noise).map(|r| r.0),
                (None, Some(z0)) => ekf_init(z0, &z, dt, t, &self.noise, self.sc.sensor.init_inflation),
                (None, None) => unreachable!("detected particle without a first measurement"),
            }
            .map_err(|e| SimError::Numerical { t, what: format!("particle {k}: {e}") })?;
            if !est.x.iter().all(|x| x.is_finite()) {
                return Err(SimError::Numerical { t, what: format!("particle {k}: estimate diverged") });
            }
            let hit = predict_impact(&est.x, &self.spheroid, t);
            if hit.is_some() {
                p.impact = hit;
            }
            let first = hit.is_some() && p.first_prediction.is_none();
            if first {
                p.first_prediction = Some(t);
            }
            if self.step >= p.next_refresh {
                p.decay = decay_field(&est, t, &self.mesh, &self.sc.intruders.decay);
                p.next_refresh = self.step + self.refresh_steps;
            }
            p.est = Some(est);
            if let (true, Some(h)) = (first, hit) {
                self.emit(EventKind::Predict { particle: k, impact_time: h.time, impact_point: arr(&h.point) });
            }
        }
        // Assigned agents follow the latest estimate until the impact time.
        for i in 0..n {
            let d = &self.agents[i].disc;
            let (Some(k), Some(t_ck)) = (d.particle, d.t_ck) else { continue };
            let p = &self.particles[k];
            if t < t_ck && p.truth.alive {
                if let Some(h) = p.impact {
                    let d = &mut self.agents[i].disc;
                    d.destination = Some(h.point);
                    d.t_ck = Some(h.time);
                }
            }
        }
        Ok(())
    }

    fn impact(&mut self, k: usize) {
        let p = &mut self.particles[k];
        p.truth.alive = false;
        p.decay = DecayMap::default();
        let (predicted, intercepted, dwell) = (p.first_prediction.is_some(), p.intercept_time.is_some(), p.dwell);
        self.emit(EventKind::Impact { particle: k, predicted, intercepted, dwell });
        let t = self.time();
        self.impacts.push_back(t);
        while self.impacts.front().is_some_and(|&s| s < t - self.capacity_window) {
            self.impacts.pop_front();
        }
        if self.impacts.len() + 1 > self.agents.len() {
            let (impacts, window) = (self.impacts.len(), self.capacity_window);
            self.emit(EventKind::CapacityWarning { impacts, window });
        }
    }

    fn assign_particles(&mut self, normals: &[Option<SurfaceNormal>]) {
        let t = self.time();
        let n = self.agents.len();
        let t_star = self.sc.agents.lifespan_s;
        let mut queue: Vec<(f64, usize)> = self
            .particles
            .iter()
            .enumerate()
            .filter(|(_, p)| p.truth.alive && p.assigned.is_none())
            .filter_map(|(k, p)| p.impact.map(|h| (h.time, k)))
            .collect();
        queue.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, k) in queue {
            let hit = self.particles[k].impact.expect("queued with a prediction");
            let candidates: Vec<Candidate> = (0..n)
                .filter(|&i| normals[i].is_some() && self.flying(i) && self.agents[i].disc.mode != Mode::ReturnToBase)
                .map(|i| Candidate {
                    index: i,
                    power_index: power_index(i + 1, t, n, t_star),
                    flag: self.agents[i].disc.flag,
                    z: self.agents[i].state.position.z,
                    deadline: t + (t_star - self.return_time - self.t_f(i)),
                })
                .collect();
            match assign_particle(&candidates, hit.point.z, hit.time) {
                Some(i) => {
                    let d = &mut self.agents[i].disc;
                    d.flag = true;
                    d.particle = Some(k);
                    d.destination = Some(hit.point);
                    d.t_ck = Some(hit.time);
                    self.particles[k].assigned = Some(i);
                    self.emit(EventKind::Assign { particle: k, agent: i, impact_time: hit.time });
                }
                None if !self.particles[k].deferred => {
                    self.particles[k].deferred = true;
                    self.emit(EventKind::Defer { particle: k });
                }
                None => {}
            }
        }
        // An assignment explored in local coverage ends at the impact time.
        for i in 0..n {
            let d = &self.agents[i].disc;
            if d.mode == Mode::LocalCoverage && d.flag && d.t_ck.is_some_and(|tc| t >= tc) {
                let particle = d.particle.expect("an assignment names its particle");
                let d = &mut self.agents[i].disc;
                d.flag = false;
                d.particle = None;
                d.t_ck = None;
                d.destination = None;
                self.emit(EventKind::Release { agent: i, particle });
            }
        }
    }

    fn band(&self, ip: usize) -> Option<(f64, f64)> {
        (ip >= 2).then(|| (self.bounds[ip - 1], self.bounds[ip - 2]))
    }

    fn discrete_update(&mut self, normals: &[Option<SurfaceNormal>]) -> Result<(), SimError> {
        let t = self.time();
        let n = self.agents.len();
        let v = self.sc.agents.vehicle;
        let t_star = self.sc.agents.lifespan_s;

        // Local coverage flies on the base tier whatever μ says.
        let positions: Vec<Option<(Vec3, usize)>> = (0..n)
            .map(|i| {
                let a = &self.agents[i];
                let tier = if a.disc.mode == Mode::LocalCoverage { 0 } else { a.disc.mu };
                self.flying(i).then_some((a.state.position, tier))
            })
            .collect();
        // Agents returning to base never yield.
        let keys: Vec<f64> = (0..n)
            .map(|i| if self.agents[i].disc.mode == Mode::ReturnToBase { f64::INFINITY } else { self.t_f(i) })
            .collect();
        let groups = detect_deadlock(&positions, &keys, v.sensing_range);
        for g in &groups {
            if !self.groups.contains(g) {
                self.emit(EventKind::Deadlock { members: g.members.clone(), priority: g.priority });
            }
        }
        let prox = proximity(&positions, &keys, v.sensing_range, &groups);
        self.groups = groups;

        let views: Vec<Option<GuardView>> = (0..n)
            .map(|i| {
                let nrm = normals[i].as_ref()?;
                let a = &self.agents[i];
                let ip = power_index(i + 1, t, n, t_star);
                let dest_distance = a
                    .disc
                    .destination
                    .and_then(|d| self.family.project_to_surface(a.disc.mu, &d).ok())
                    .map(|d| (a.state.position - d).norm());
                Some(GuardView {
                    t,
                    power_index: ip,
                    z: nrm.foot_point.z,
                    band: self.band(ip),
                    dest_distance,
                    station_distance: (a.state.position - self.station).norm(),
                    log_altitude: log_altitude(nrm.length, v.body_radius, tier_height(&v, a.disc.mu)),
                    proximity: prox[i],
                    return_time: self.return_time,
                    t_star,
                    epsilon1: v.epsilon1,
                    epsilon2: v.epsilon2,
                    clock_tolerance: 0.5 * self.dt(),
                })
            })
            .collect();

        for i in 0..n {
            let Some(view) = views[i] else { continue };
            let t_f = self.t_f(i);
            self.agents[i].disc.t_f = t_f;
            self.agents[i].disc.critical = view.power_index == 1;
            let before = self.agents[i].disc.clone();
            let Some(tr) = eval_guards(&before, &view) else { continue };
            if tr.resets.mu.is_some_and(|mu| mu + 1 > n) {
                return Err(SimError::Domain {
                    t,
                    agent: i,
                    message: format!("tier {} exceeds the outermost surface {}", before.mu + 1, n - 1),
                });
            }
            apply(&mut self.agents[i].disc, &tr);
            if tr.resets.t_f.is_some() {
                self.agents[i].deploy_step = self.step;
            }
            let after = &self.agents[i].disc;
            self.events.push(Event {
                step: self.step,
                t,
                kind: EventKind::Transition {
                    agent: i,
                    from: tr.from,
                    to: tr.to,
                    power_index: view.power_index,
                    flag: [before.flag, after.flag],
                    mu: [before.mu, after.mu],
                    t_f: [t_f, after.t_f],
                    context: tr.context,
                },
            });
        }

        // Every mode requires the power ratio T*/t_F to stay at or above one.
        for i in 0..n {
            if self.agents[i].deployed && self.t_f(i) > t_star + 0.5 * self.dt() {
                return Err(SimError::Domain {
                    t,
                    agent: i,
                    message: format!("time since deployment {} exceeds the lifespan {t_star}", self.t_f(i)),
                });
            }
        }
        Ok(())
    }

    fn commands(&self, normals: &[Option<SurfaceNormal>]) -> Result<Vec<Option<ControlCommand>>, SimError> {
        let v = self.sc.agents.vehicle;
        let t = self.time();
        let n = self.agents.len();
        (0..n)
            .map(|i| {
                let Some(nrm) = normals[i].as_ref() else { return Ok(None) };
                let a = &self.agents[i];
                let d = &a.disc;
                let cmd = match d.mode {
                    Mode::LocalCoverage => {
                        let terms = local_coverage_terms(&self.model, &a.state, &self.field, &self.mesh);
                        local_coverage_control(&v, &a.state, &terms, nrm, self.field.c_star)
                    }
                    Mode::ParticleIntercept => {
                        let dest = d.destination.unwrap_or(nrm.foot_point);
                        geodesic_control(&v, &self.family, &a.state, &dest, d.mu, nrm, None)
                    }
                    Mode::PartitionTransfer => {
                        let ip = power_index(i + 1, t, n, self.sc.agents.lifespan_s);
                        let inset = 1e-3 * self.spheroid.polar_radius();
                        let dest = self
                            .band(ip)
                            .and_then(|(lo, hi)| partition_destination(&self.spheroid, &nrm.foot_point, lo, hi, inset))
                            .unwrap_or(nrm.foot_point);
                        geodesic_control(&v, &self.family, &a.state, &dest, d.mu, nrm, None)
                    }
                    Mode::SurfaceTransfer => {
                        let mut cmd = surface_transfer_control(&v, &a.state, tier_height(&v, d.mu), nrm);
                        // A descent is only started with nobody within R; hold
                        // altitude if someone has moved in underneath since.
                        if let Ok(c) = cmd.as_mut() {
                            if c.log_altitude > 0.0 && self.occupied_below(i, nrm.length, normals) {
                                c.velocity.linear = Vec3::zeros();
                            }
                        }
                        cmd
                    }
                    Mode::ReturnToBase => {
                        geodesic_control(&v, &self.family, &a.state, &self.station, d.mu, nrm, Some(self.dt()))
                    }
                };
                cmd.map(Some).map_err(|source| SimError::Surface { t, agent: i, source })
            })
            .collect()
    }

    fn occupied_below(&self, i: usize, height: f64, normals: &[Option<SurfaceNormal>]) -> bool {
        let p = self.agents[i].state.position;
        let r = self.sc.agents.vehicle.sensing_range;
        (0..self.agents.len()).any(|j| {
            j != i
                && self.flying(j)
                && normals[j].as_ref().is_some_and(|n| n.length < height)
                && (self.agents[j].state.position - p).norm() <= r
        })
    }

    fn move_agents(&mut self, commands: &[Option<ControlCommand>]) -> Result<(), SimError> {
        let dt = self.dt();
        let t = self.time();
        for (i, cmd) in commands.iter().enumerate() {
            let Some(cmd) = cmd else { continue };
            let next = integrate(&self.agents[i].state, &cmd.velocity, dt).state;
            if !(next.position.iter().all(|x| x.is_finite()) && next.euler.iter().all(|x| x.is_finite())) {
                return Err(SimError::Numerical { t, what: format!("agent {i}: non-finite pose") });
            }
            self.agents[i].state = next;
        }
        Ok(())
    }

    fn update_coverage(&mut self) {
        self.sensing.fill(0.0);
        self.decay.fill(0.0);
        for i in 0..self.agents.len() {
            if self.agents[i].deployed {
                let pose = SensorPose::from(&self.agents[i].state);
                CoverageField::add_sensing_rate(&self.mesh, &self.model, &pose, &mut self.sensing, &mut self.scratch);
            }
        }
        for p in &self.particles {
            if p.truth.alive {
                p.decay.add_to(&mut self.decay);
            }
        }
        self.field.accumulate(&self.sensing, &self.decay, self.dt());
    }

    /// Metrics, interception dwell and proximity bookkeeping at the end of a step.
    fn record(&mut self) -> Result<(), SimError> {
        let t = self.time();
        let dt = self.dt();
        let n = self.agents.len();
        let v = self.sc.agents.vehicle;

        let mut normal = vec![f64::NAN; n];
        for (i, slot) in normal.iter_mut().enumerate() {
            if self.agents[i].deployed {
                *slot = self.normal(i)?.length;
            }
        }
        let flying: Vec<usize> = (0..n).filter(|&i| self.flying(i)).collect();
        let mut min_dist = f64::INFINITY;
        for (a, &i) in flying.iter().enumerate() {
            for &j in &flying[a + 1..] {
                let d = (self.agents[i].state.position - self.agents[j].state.position).norm();
                min_dist = min_dist.min(d);
                let pair = (i, j);
                // A step allowed without `allow_coarse_step` closes a pair by at
                // most R/5, so a first sample deeper than that skipped the trigger.
                if d <= v.sensing_range {
                    if self.close_pairs.insert(pair) && d < 0.8 * v.sensing_range {
                        self.emit(EventKind::ProximityViolation { agents: [i, j], distance: d });
                    }
                } else {
                    self.close_pairs.remove(&pair);
                }
                if d <= 2.0 * v.body_radius {
                    if self.colliding.insert(pair) {
                        self.emit(EventKind::Collision { agents: [i, j], distance: d });
                    }
                } else {
                    self.colliding.remove(&pair);
                }
            }
        }
        self.close_pairs.retain(|&(i, j)| flying.contains(&i) && flying.contains(&j));
        self.colliding.retain(|&(i, j)| flying.contains(&i) && flying.contains(&j));
        if flying.len() < 2 {
            min_dist = -1.0;
        }

        // Interception dwell: time some agent spends within ε₁ of the
        // projected estimated impact point before the impact.
        for k in 0..self.particles.len() {
            let p = &self.particles[k];
            if !p.truth.alive || t > p.truth.impact_time {
                continue;
            }
            let Some(hit) = p.impact else { continue };
            let near = flying.iter().copied().find(|&i| {
                let a = &self.agents[i];
                self.family
                    .project_to_surface(a.disc.mu, &hit.point)
                    .is_ok_and(|q| (a.state.position - q).norm() <= v.epsilon1)
            });
            if let Some(i) = near {
                let p = &mut self.particles[k];
                p.dwell += dt;
                if p.intercept_time.is_none() && p.dwell >= self.sc.simulation.dwell_min_s - 1e-9 {
                    p.intercept_time = Some(t);
                    self.emit(EventKind::Intercept { particle: k, agent: i });
                }
            }
        }

        let e_norm = self.field.normalized_error(&self.mesh);
        if !e_norm.is_finite() {
            return Err(SimError::Numerical { t, what: "coverage error is not finite".into() });
        }
        let stride = self.sc.outputs.metrics_stride as u64;
        if self.step % stride == 0 {
            self.metrics.push(MetricsRow {
                t,
                e_norm,
                min_dist,
                modes: (0..n).map(|i| self.agents[i].deployed.then_some(self.agents[i].disc.mode)).collect(),
                normal,
            });
        }
        let every = self.sc.outputs.snapshot_interval_s;
        if every > 0.0 {
            let k = (every / dt).round().max(1.0) as u64;
            if self.step % k == 0 {
                self.snapshots.push((t, self.field.q.clone()));
            }
        }
        Ok(())
    }
}

/// Build and run a scenario.
pub fn run(sc: &Scenario) -> Result<RunOutput, SimError> {
    Ok(Simulation::new(*sc)?.run())
}
