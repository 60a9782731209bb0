use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::{Arc, Mutex};

use masim_core::agent::{
    Agent, AgentState, Component, ComponentError, ComponentKind, Inbox, InitContext, KnowledgeValue, RunSummary,
    SyncCoordinator, TraceLog, WorldView,
};
use masim_core::comms::{Endpoint, InProcessHub, Payload, Recipient, TaskAction, TaskMessage};
use masim_core::env::{Entity, ObstacleRef, Shape, World2D};
use serde::{Deserialize, Serialize};
use tracing::{debug, info, warn};

use super::allocate::{allocate, Bid};
use super::map::{NamedRect, WarehouseMap};
use super::risk::{estimate_task_risk, nominal_velocity, progress, CapabilityProfile, Commitment, RiskSettings};
use super::task::{FetchTask, TaskKind, TaskStatus};
use super::TaskingError;
use crate::Issue;

/// Agent id of the auctioneer, which has no body.
pub const AUCTIONEER: u32 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub id: u32,
    pub name: String,
    pub start: [f64; 2],
    pub home: String,
    pub profile: CapabilityProfile,
}

/// A task and the step it is issued at. With `assignee` set the task is
/// awarded directly instead of auctioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledTask {
    pub id: u64,
    pub step: u64,
    #[serde(flatten)]
    pub kind: TaskKind,
    pub deadline: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignee: Option<u32>,
}

impl ScheduledTask {
    pub fn task(&self) -> FetchTask {
        FetchTask { id: self.id, kind: self.kind.clone(), issue_step: self.step, deadline: self.deadline }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarehouseConfig {
    pub map: WarehouseMap,
    pub dt: f64,
    pub steps: u64,
    pub epsilon: f64,
    pub n_samples: usize,
    pub robots: Vec<RobotSpec>,
    pub schedule: Vec<ScheduledTask>,
}

fn rect(name: &str, min: [f64; 2], max: [f64; 2]) -> NamedRect {
    NamedRect { name: name.into(), min, max }
}

fn fetch(id: u64, step: u64, origin: &str, deadline: u64) -> ScheduledTask {
    ScheduledTask {
        id,
        step,
        kind: TaskKind::Fetch { origin: origin.into(), destination: "PICKUP".into() },
        deadline,
        assignee: None,
    }
}

fn home(id: u64, step: u64, home: &str, robot: u32) -> ScheduledTask {
    ScheduledTask { id, step, kind: TaskKind::Home { destination: home.into() }, deadline: 10, assignee: Some(robot) }
}

impl WarehouseConfig {
    /// Four robots, two homes, three collection points and a pickup point
    /// behind two walls. Robot C is slower and much noisier than the rest.
    pub fn fetch_demo() -> Self {
        let profile = |max_speed: f64, noise: f64, equipment: &str| CapabilityProfile {
            max_speed,
            noise,
            equipment: equipment.into(),
        };
        let robot = |id: u32, name: &str, start: [f64; 2], home: &str, p: CapabilityProfile| RobotSpec {
            id,
            name: name.into(),
            start,
            home: home.into(),
            profile: p,
        };
        Self {
            map: WarehouseMap {
                bounds: rect("warehouse", [0.0, 0.0], [20.0, 12.0]),
                walls: vec![rect("W-1", [4.0, 5.5], [8.0, 6.5]), rect("W-2", [12.0, 5.5], [16.0, 6.5])],
                regions: vec![
                    rect("H-1", [1.0, 1.0], [3.0, 3.0]),
                    rect("H-2", [17.0, 1.0], [19.0, 3.0]),
                    rect("PICKUP", [9.0, 1.0], [11.0, 3.0]),
                    rect("CP-1", [2.0, 9.0], [4.0, 11.0]),
                    rect("CP-2", [9.0, 9.0], [11.0, 11.0]),
                    rect("CP-3", [16.0, 9.0], [18.0, 11.0]),
                ],
                clearance: 0.6,
            },
            dt: 1.0,
            steps: 45,
            epsilon: 0.2,
            n_samples: 200,
            robots: vec![
                robot(1, "A", [1.5, 2.0], "H-1", profile(4.0, 0.15, "standard")),
                robot(2, "B", [2.5, 2.0], "H-1", profile(4.0, 0.15, "standard")),
                robot(3, "C", [17.5, 2.0], "H-2", profile(3.0, 1.2, "worn")),
                robot(4, "D", [18.5, 2.0], "H-2", profile(4.0, 0.15, "standard")),
            ],
            schedule: vec![
                fetch(1, 1, "CP-1", 10),
                fetch(2, 1, "CP-2", 7),
                fetch(3, 1, "CP-3", 7),
                fetch(4, 15, "CP-1", 10),
                fetch(5, 15, "CP-2", 10),
                home(6, 30, "H-1", 1),
                home(7, 30, "H-1", 2),
                home(8, 30, "H-2", 3),
                home(9, 30, "H-2", 4),
            ],
        }
    }

    pub fn risk_settings(&self) -> RiskSettings {
        RiskSettings { n_samples: self.n_samples, dt: self.dt, epsilon: self.epsilon, award_delay: 1 }
    }

    pub fn robot(&self, id: u32) -> Option<&RobotSpec> {
        self.robots.iter().find(|r| r.id == id)
    }

    pub fn validate(&self, path: &str) -> Vec<Issue> {
        let mut issues = self.map.validate(&format!("{path}.map"));
        let mut push = |p: String, m: String| issues.push(Issue::new(p, m));
        if !(self.dt > 0.0) {
            push(format!("{path}.dt"), "must be positive".into());
        }
        if self.steps == 0 {
            push(format!("{path}.steps"), "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            push(format!("{path}.epsilon"), "must lie in [0, 1]".into());
        }
        if self.n_samples == 0 {
            push(format!("{path}.n_samples"), "must be at least 1".into());
        }
        let bounds = self.map.bounds.rect();
        let walls = self.map.wall_rects();
        let mut ids = BTreeSet::new();
        for (k, r) in self.robots.iter().enumerate() {
            let p = format!("{path}.robots[{k}]");
            if r.id == AUCTIONEER {
                push(format!("{p}.id"), format!("id {AUCTIONEER} is reserved for the auctioneer"));
            }
            if !ids.insert(r.id) {
                push(format!("{p}.id"), format!("duplicate robot id {}", r.id));
            }
            if !bounds.contains(r.start) || walls.iter().any(|w| w.contains(r.start)) {
                push(format!("{p}.start"), "must be inside the warehouse and outside every wall".into());
            }
            if self.map.region(&r.home).is_err() {
                push(format!("{p}.home"), format!("unknown region '{}'", r.home));
            }
            for i in r.profile.validate(&format!("{p}.profile")) {
                push(i.path, i.message);
            }
        }
        let mut task_ids = BTreeSet::new();
        for (k, t) in self.schedule.iter().enumerate() {
            let p = format!("{path}.schedule[{k}]");
            if !task_ids.insert(t.id) {
                push(format!("{p}.id"), format!("duplicate task id {}", t.id));
            }
            if t.deadline == 0 {
                push(format!("{p}.deadline"), "must be positive".into());
            }
            for region in t.kind.origin().into_iter().chain([t.kind.destination()]) {
                if self.map.region(region).is_err() {
                    push(p.clone(), format!("unknown region '{region}'"));
                }
            }
            if let Some(a) = t.assignee {
                if !ids.contains(&a) {
                    push(format!("{p}.assignee"), format!("unknown robot {a}"));
                }
            }
        }
        issues
    }
}

/// One bid as the auctioneer received it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidRecord {
    /// Step the bid was computed at.
    pub step: u64,
    pub agent: u32,
    pub task: u64,
    pub risk: f64,
}

#[derive(Debug, Default)]
struct Ledger {
    bids: Vec<BidRecord>,
    status: BTreeMap<u64, TaskStatus>,
    assigned: BTreeMap<u64, (u64, f64)>,
    flagged: BTreeMap<u64, u64>,
    bad_transitions: Vec<(u64, TaskStatus, TaskStatus)>,
}

impl Ledger {
    fn transition(&mut self, task: u64, next: TaskStatus) {
        let cur = self.status.get(&task).copied().unwrap_or(TaskStatus::Open);
        if cur.can_become(&next) {
            self.status.insert(task, next);
        } else {
            warn!(task, ?cur, ?next, "rejected task status change");
            self.bad_transitions.push((task, cur, next));
        }
    }
}

type SharedLedger = Arc<Mutex<Ledger>>;

fn task_message(task_id: u64, action: TaskAction) -> Payload {
    Payload::Task(TaskMessage { task_id, action })
}

/// Issues tasks on schedule, collects bids and awards open tasks.
pub struct Auctioneer {
    schedule: Vec<ScheduledTask>,
    epsilon: f64,
    endpoint: Endpoint,
    open: BTreeMap<u64, FetchTask>,
    ledger: SharedLedger,
}

#[derive(Debug, Default)]
pub struct AuctionRound {
    time: f64,
    step: u64,
    messages: Vec<(Recipient, Payload)>,
    awards: Vec<(u64, u32, f64)>,
}

impl Component for Auctioneer {
    type Output = AuctionRound;

    fn kind(&self) -> ComponentKind {
        ComponentKind::Controller
    }

    fn name(&self) -> &str {
        "auctioneer"
    }

    fn compute(&mut self, view: &WorldView<'_>) -> Result<AuctionRound, ComponentError> {
        let step = view.step;
        let mut round = AuctionRound { time: view.time, step, ..AuctionRound::default() };
        let bids: Vec<Bid> = view
            .state
            .inbox
            .iter()
            .filter_map(|m| match &m.payload {
                Payload::Task(TaskMessage { task_id, action: TaskAction::Bid { risk } }) => {
                    Some(Bid { agent: m.sender, task: *task_id, risk: *risk })
                }
                _ => None,
            })
            .collect();
        self.open.retain(|_, t| t.due_step() >= step);
        let biddable: Vec<FetchTask> =
            self.open.values().filter(|t| bids.iter().any(|b| b.task == t.id)).cloned().collect();
        let allocation = allocate(&biddable, &bids, self.epsilon);
        {
            let mut ledger = self.ledger.lock().expect("ledger lock");
            for id in &allocation.flagged {
                *ledger.flagged.entry(*id).or_default() += 1;
            }
        }
        for (id, bid) in &allocation.assigned {
            self.open.remove(id);
            round.awards.push((*id, bid.agent, bid.risk));
            round.messages.push((Recipient::Broadcast, task_message(*id, TaskAction::Award { winner: bid.agent })));
        }
        for s in self.schedule.iter().filter(|s| s.step == step) {
            let task = s.task();
            let spec = serde_json::to_string(&task).map_err(|e| ComponentError::failed(e.to_string()))?;
            round.messages.push((Recipient::Broadcast, task_message(s.id, TaskAction::Announce { spec })));
            match s.assignee {
                Some(winner) => {
                    round.awards.push((s.id, winner, f64::NAN));
                    round.messages.push((Recipient::Broadcast, task_message(s.id, TaskAction::Award { winner })));
                }
                None => {
                    self.open.insert(s.id, task);
                }
            }
        }
        for t in self.open.values().filter(|t| t.issue_step != step && t.due_step() > step) {
            let spec = serde_json::to_string(t).map_err(|e| ComponentError::failed(e.to_string()))?;
            round.messages.push((Recipient::Broadcast, task_message(t.id, TaskAction::Announce { spec })));
        }
        Ok(round)
    }

    fn update(&mut self, state: &mut AgentState, round: AuctionRound) -> Result<(), ComponentError> {
        let step_of = round.step as f64;
        {
            let mut ledger = self.ledger.lock().expect("ledger lock");
            for (task, winner, risk) in &round.awards {
                ledger.transition(*task, TaskStatus::Assigned(*winner));
                ledger.assigned.insert(*task, (round.step, *risk));
                state.knowledge.insert(
                    format!("task:assigned:{task}"),
                    KnowledgeValue::Vector(vec![f64::from(*winner), step_of, *risk]),
                );
                info!(task, winner, risk, "task awarded");
            }
        }
        for (to, payload) in round.messages {
            self.endpoint.send(to, round.time, payload)?;
        }
        Ok(())
    }
}

/// Bids on announced tasks and drives the robot through its queue.
pub struct RobotController {
    map: WarehouseMap,
    profile: CapabilityProfile,
    settings: RiskSettings,
    endpoint: Endpoint,
    seed: u64,
    queue: VecDeque<Commitment>,
    known: BTreeMap<u64, FetchTask>,
    ledger: SharedLedger,
}

#[derive(Debug, Default)]
pub struct RobotStep {
    time: f64,
    step: u64,
    done: Vec<u64>,
    bids: Vec<(u64, f64)>,
    velocity: [f64; 2],
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

impl RobotController {
    fn position(view: &WorldView<'_>) -> Result<[f64; 2], ComponentError> {
        match view.state.awareness.belief() {
            [x, y, ..] => Ok([*x, *y]),
            _ => Err(ComponentError::failed("robot has no position")),
        }
    }
}

impl Component for RobotController {
    type Output = RobotStep;

    fn kind(&self) -> ComponentKind {
        ComponentKind::Controller
    }

    fn name(&self) -> &str {
        "robot"
    }

    fn initialize(&mut self, ctx: &InitContext, _state: &mut AgentState) -> Result<(), ComponentError> {
        self.seed = ctx.seed;
        Ok(())
    }

    fn compute(&mut self, view: &WorldView<'_>) -> Result<RobotStep, ComponentError> {
        let me = view.state.id;
        let pos = Self::position(view)?;
        let mut out = RobotStep { time: view.time, step: view.step, ..RobotStep::default() };
        out.done = progress(&mut self.queue, pos);
        let mut announced = Vec::new();
        for m in &view.state.inbox {
            let Payload::Task(TaskMessage { task_id, action }) = &m.payload else { continue };
            match action {
                TaskAction::Announce { spec } => {
                    let task: FetchTask = serde_json::from_str(spec).map_err(|e| ComponentError::failed(e.to_string()))?;
                    self.known.insert(*task_id, task);
                    announced.push(*task_id);
                }
                TaskAction::Award { winner } => {
                    announced.retain(|t| t != task_id);
                    if *winner == me {
                        let task = self
                            .known
                            .get(task_id)
                            .cloned()
                            .ok_or_else(|| ComponentError::failed(format!("award for unknown task {task_id}")))?;
                        let c = Commitment::new(task, &self.map).map_err(|e| ComponentError::failed(e.to_string()))?;
                        self.queue.push_back(c);
                    }
                }
                TaskAction::Bid { .. } => {}
            }
        }
        out.done.extend(progress(&mut self.queue, pos));
        for id in announced {
            let task = &self.known[&id];
            let est = estimate_task_risk(
                &self.map,
                &self.profile,
                pos,
                &self.queue,
                task,
                view.step,
                &self.settings,
                mix(self.seed, id, view.step),
            )
            .map_err(|e| ComponentError::failed(e.to_string()))?;
            debug!(agent = me, task = id, risk = est.risk, "bid");
            out.bids.push((id, est.risk));
        }
        out.velocity = match self.queue.front() {
            Some(c) => nominal_velocity(&self.map, pos, c.target(), self.profile.max_speed, self.settings.dt),
            None => [0.0, 0.0],
        };
        Ok(out)
    }

    fn update(&mut self, state: &mut AgentState, out: RobotStep) -> Result<(), ComponentError> {
        state.control_input = out.velocity.to_vec();
        {
            let mut ledger = self.ledger.lock().expect("ledger lock");
            for id in &out.done {
                state.knowledge.insert(format!("task:done:{id}"), KnowledgeValue::Scalar(out.step as f64));
                ledger.transition(*id, TaskStatus::Done(state.id));
                info!(agent = state.id, task = id, step = out.step, "task done");
            }
            for (task, risk) in &out.bids {
                ledger.bids.push(BidRecord { step: out.step, agent: state.id, task: *task, risk: *risk });
            }
        }
        let queue: Vec<f64> = self.queue.iter().map(|c| c.task.id as f64).collect();
        state.knowledge.insert("task:queue", KnowledgeValue::Vector(queue));
        if let Some(worst) = out.bids.iter().map(|b| b.1).reduce(f64::max) {
            state.awareness.set_risk(worst)?;
        }
        for (task, risk) in out.bids {
            self.endpoint.send(Recipient::Agent(AUCTIONEER), out.time, task_message(task, TaskAction::Bid { risk }))?;
        }
        Ok(())
    }
}

/// One row of the task report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub id: u64,
    pub kind: String,
    pub origin: String,
    pub destination: String,
    pub issue_step: u64,
    pub deadline: u64,
    pub assignee: Option<u32>,
    pub assign_step: Option<u64>,
    /// Winning bid; `None` for directly awarded tasks.
    pub risk: Option<f64>,
    pub completion_step: Option<u64>,
    pub deadline_met: bool,
    /// Rounds in which no bid qualified.
    pub flagged_rounds: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WarehouseReport {
    pub steps: u64,
    pub epsilon: f64,
    pub tasks: Vec<TaskRow>,
    pub fetch_counts: BTreeMap<String, usize>,
    pub bids: Vec<BidRecord>,
    /// `(step, robot)` for each sample where a robot touched a wall.
    pub wall_collisions: Vec<(u64, u32)>,
    /// `(step, robot)` for each sample where a robot left the warehouse.
    pub exits: Vec<(u64, u32)>,
    /// Status changes the task state machine refused.
    pub rejected_transitions: usize,
    /// Robot positions per sample, robots in id order.
    pub positions: Vec<Vec<[f64; 2]>>,
}

impl WarehouseReport {
    pub fn all_met(&self) -> bool {
        self.tasks.iter().all(|t| t.deadline_met)
    }

    /// Assignments whose winning bid exceeded epsilon.
    pub fn unqualified_assignments(&self) -> usize {
        self.tasks.iter().filter(|t| t.risk.is_some_and(|r| r > self.epsilon)).count()
    }
}

pub struct WarehouseRun {
    pub report: WarehouseReport,
    pub trace: TraceLog,
    pub summary: RunSummary,
}

/// The scenario wired onto a synchronous coordinator.
pub struct Warehouse {
    cfg: WarehouseConfig,
    coordinator: SyncCoordinator,
    hub: Arc<InProcessHub>,
    ledger: SharedLedger,
}

struct Parts {
    world: World2D,
    agents: Vec<Agent>,
    hub: Arc<InProcessHub>,
    ledger: SharedLedger,
}

fn build_parts(cfg: &WarehouseConfig, seed: u64) -> Result<Parts, TaskingError> {
    if let Some(i) = cfg.validate("warehouse").first() {
        return Err(TaskingError::Config(i.to_string()));
    }
    let mut world = World2D::new(cfg.map.bounds.rect(), cfg.dt, seed)
        .map_err(|e| TaskingError::Config(e.to_string()))?
        .with_walls(cfg.map.wall_rects());
    let hub = Arc::new(InProcessHub::default());
    let ledger = SharedLedger::default();
    let endpoint = Endpoint::new(AUCTIONEER, hub.clone())?;
    let mut agents = vec![Agent::new(AUCTIONEER).with_component(Inbox::new(endpoint.clone())).with_component(Auctioneer {
        schedule: cfg.schedule.clone(),
        epsilon: cfg.epsilon,
        endpoint,
        open: BTreeMap::new(),
        ledger: ledger.clone(),
    })];
    for r in &cfg.robots {
        world
            .add_entity(Entity::modeled(r.id, Arc::new(r.profile.model()), r.start.to_vec(), Shape::Disc { radius: 0.2 }))
            .map_err(|e| TaskingError::Config(e.to_string()))?;
        let endpoint = Endpoint::new(r.id, hub.clone())?;
        agents.push(Agent::new(r.id).bind_entity(r.id).with_component(Inbox::new(endpoint.clone())).with_component(
            RobotController {
                map: cfg.map.clone(),
                profile: r.profile.clone(),
                settings: cfg.risk_settings(),
                endpoint,
                seed,
                queue: VecDeque::new(),
                known: BTreeMap::new(),
                ledger: ledger.clone(),
            },
        ));
    }
    Ok(Parts { world, agents, hub, ledger })
}

/// World and agents of the scenario, for schedulers other than
/// [`Warehouse`]. The auctioneer is agent [`AUCTIONEER`].
pub fn build_agents(cfg: &WarehouseConfig, seed: u64) -> Result<(World2D, Vec<Agent>), TaskingError> {
    let parts = build_parts(cfg, seed)?;
    Ok((parts.world, parts.agents))
}

impl Warehouse {
    pub fn new(cfg: &WarehouseConfig, seed: u64) -> Result<Self, TaskingError> {
        let parts = build_parts(cfg, seed)?;
        let mut coordinator = SyncCoordinator::new(parts.world, seed);
        for a in parts.agents {
            coordinator.add_agent(a)?;
        }
        Ok(Self { cfg: cfg.clone(), coordinator, hub: parts.hub, ledger: parts.ledger })
    }

    pub fn hub(&self) -> &Arc<InProcessHub> {
        &self.hub
    }

    pub fn coordinator(&self) -> &SyncCoordinator {
        &self.coordinator
    }

    pub fn run(mut self) -> Result<WarehouseRun, TaskingError> {
        let mut ids: Vec<u32> = self.cfg.robots.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        let snapshot = |world: &World2D| -> Vec<[f64; 2]> {
            ids.iter().map(|&id| world.state_of(id).map(|s| [s[0], s[1]]).unwrap_or([f64::NAN; 2])).collect()
        };
        self.coordinator.initialize()?;
        let mut positions = vec![snapshot(self.coordinator.world())];
        for _ in 0..self.cfg.steps {
            self.coordinator.step_once()?;
            positions.push(snapshot(self.coordinator.world()));
        }
        let summary = self.coordinator.summary().clone();
        let ledger = std::mem::take(&mut *self.ledger.lock().expect("ledger lock"));
        let report = self.report(ledger, &summary, positions);
        info!(
            met = report.all_met(),
            walls = report.wall_collisions.len(),
            exits = report.exits.len(),
            "warehouse finished"
        );
        Ok(WarehouseRun { report, trace: self.coordinator.trace(), summary })
    }

    fn report(&self, ledger: Ledger, summary: &RunSummary, positions: Vec<Vec<[f64; 2]>>) -> WarehouseReport {
        let done_step = |task: u64, agent: u32| {
            self.coordinator
                .agent(agent)
                .and_then(|a| a.state().knowledge.get(&format!("task:done:{task}")).and_then(KnowledgeValue::as_scalar))
                .map(|s| s as u64)
        };
        let mut fetch_counts: BTreeMap<String, usize> = self.cfg.robots.iter().map(|r| (r.name.clone(), 0)).collect();
        let tasks = self
            .cfg
            .schedule
            .iter()
            .map(|s| {
                let task = s.task();
                let assignee = match ledger.status.get(&s.id) {
                    Some(TaskStatus::Assigned(a) | TaskStatus::Done(a) | TaskStatus::Failed(a)) => Some(*a),
                    _ => None,
                };
                let completion_step = assignee.and_then(|a| done_step(s.id, a));
                if let (true, Some(a)) = (task.kind.is_fetch(), assignee) {
                    if let Some(r) = self.cfg.robot(a) {
                        *fetch_counts.entry(r.name.clone()).or_default() += 1;
                    }
                }
                let assigned = ledger.assigned.get(&s.id);
                TaskRow {
                    id: s.id,
                    kind: if task.kind.is_fetch() { "fetch" } else { "home" }.into(),
                    origin: task.kind.origin().unwrap_or("").into(),
                    destination: task.kind.destination().into(),
                    issue_step: s.step,
                    deadline: s.deadline,
                    assignee,
                    assign_step: assigned.map(|a| a.0),
                    risk: assigned.map(|a| a.1).filter(|r| r.is_finite()),
                    completion_step,
                    deadline_met: completion_step.is_some_and(|c| c <= task.due_step()),
                    flagged_rounds: ledger.flagged.get(&s.id).copied().unwrap_or(0),
                }
            })
            .collect();
        let wall_collisions = summary
            .collisions
            .iter()
            .filter(|(_, c)| matches!(c.obstacle, ObstacleRef::Wall(_)))
            .map(|(step, c)| (step + 1, c.entity))
            .collect();
        let exits = summary.boundary_violations.iter().map(|(step, id)| (step + 1, *id)).collect();
        WarehouseReport {
            steps: summary.steps,
            epsilon: self.cfg.epsilon,
            tasks,
            fetch_counts,
            bids: ledger.bids,
            wall_collisions,
            exits,
            rejected_transitions: ledger.bad_transitions.len(),
            positions,
        }
    }
}

pub fn run_warehouse(cfg: &WarehouseConfig, seed: u64) -> Result<WarehouseRun, TaskingError> {
    Warehouse::new(cfg, seed)?.run()
}
