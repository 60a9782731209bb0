//! Team scenario: one agent with timed visits to interest points, leaders
//! holding formation offsets to it over a star task graph.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use masim_core::agent::{
    Agent, AgentState, Component, ComponentError, ComponentKind, HookContext, HookControl, Inbox, InitContext,
    KnowledgeValue, RangePerception, RunSummary, StepHook, SyncCoordinator, TraceLog, WorldView,
};
use masim_core::comms::{Endpoint, InProcessHub, Payload, Recipient};
use masim_core::env::{Entity, NoiseSpec, Rect, Sensing, Shape, SingleIntegratorModel, StepReport, World2D};
use masim_core::logic::{parse, stl_robustness_at, Formula, Trace};
use petgraph::algo::{connected_components, is_cyclic_undirected};
use petgraph::graph::UnGraph;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use super::barrier::TaskSchedule;
use super::control::{BarrierRecord, CbfParams, LeadEdge, LocalController, LocalStep};
use super::qp::InputBox;
use super::CbfError;
use crate::Issue;

pub const SELF_TASK_KEY: &str = "task:self";

pub fn edge_task_key(partner: u32) -> String {
    format!("task:edge:{partner}")
}

const EPS_PREFIX: &str = "cbf:eps:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbfAgentSpec {
    pub id: u32,
    pub start: [f64; 2],
    /// Per-axis speed limit of the input box.
    pub u_max: f64,
    /// Independent task over `x1, x2` (own position).
    #[serde(default)]
    pub task: Option<String>,
}

/// Collaborative task over `x1, x2` (leader) and `x3, x4` (follower).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub leader: u32,
    pub follower: u32,
    pub task: String,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_kappa() -> f64 {
    10.0
}
fn default_eta() -> f64 {
    0.3
}
fn default_gamma_min() -> f64 {
    0.5
}
fn default_d_safe() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationConfig {
    pub dt: f64,
    /// Controllers act at every sample up to and including `t_end`.
    pub t_end: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Sampled-data margin added to every barrier constraint.
    #[serde(default)]
    pub nu: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_gamma_min")]
    pub gamma_min: f64,
    #[serde(default = "default_d_safe")]
    pub d_safe: f64,
    pub agents: Vec<CbfAgentSpec>,
    pub edges: Vec<EdgeSpec>,
}

impl FormationConfig {
    /// Five agents: agent 1 visits two points, leaders 2-5 hold a square
    /// formation around it and then the same square rotated by 45 degrees.
    pub fn star_demo() -> Self {
        let d = std::f64::consts::SQRT_2;
        let offsets_a = [(2.0, 0.0), (0.0, 2.0), (-2.0, 0.0), (0.0, -2.0)];
        let offsets_b = [(d, d), (-d, d), (-d, -d), (d, -d)];
        let starts = [[1.0, 1.5], [-1.0, 2.5], [-2.5, -0.5], [0.5, -2.5]];
        let mut agents = vec![CbfAgentSpec {
            id: 1,
            start: [0.0, 0.0],
            u_max: 1.0,
            task: Some("F[10,20] norm(x1 - 8, x2) <= 1 & F[35,45] norm(x1 - 8, x2 - 8) <= 1".into()),
        }];
        let mut edges = Vec::new();
        for (k, ((a, b), s)) in offsets_a.iter().zip(&offsets_b).zip(&starts).enumerate() {
            let id = k as u32 + 2;
            agents.push(CbfAgentSpec { id, start: *s, u_max: 2.0, task: None });
            edges.push(EdgeSpec {
                leader: id,
                follower: 1,
                task: format!(
                    "G[5,25] norm(x1 - x3 - {:.4}, x2 - x4 - {:.4}) <= 0.5 & G[30,50] norm(x1 - x3 - {:.4}, x2 - x4 - {:.4}) <= 0.5",
                    a.0, a.1, b.0, b.1
                ),
            });
        }
        Self {
            dt: 0.1,
            t_end: 50.0,
            lambda: 1.0,
            nu: super::barrier::lipschitz_margin(1.0, 0.1, 2.0),
            kappa: 10.0,
            eta: 0.3,
            gamma_min: 0.5,
            d_safe: 1.0,
            agents,
            edges,
        }
    }

    pub fn params(&self) -> CbfParams {
        CbfParams {
            lambda: self.lambda,
            nu: self.nu,
            kappa: self.kappa,
            eta: self.eta,
            gamma_min: self.gamma_min,
            d_safe: self.d_safe,
        }
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64 + 1
    }

    fn spec(&self, id: u32) -> Option<&CbfAgentSpec> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn validate(&self, path: &str) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut push = |field: String, msg: String| issues.push(Issue::new(format!("{path}.{field}"), msg));
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            push("dt".into(), "dt and t_end must be positive".into());
        }
        if !(self.lambda > 0.0) || !(self.nu >= 0.0) || !(self.kappa > 0.0) {
            push("lambda".into(), "need lambda > 0, nu >= 0, kappa > 0".into());
        }
        if !(self.gamma_min > 0.0 && self.gamma_min <= 1.0) || !(self.eta >= 0.0) {
            push("gamma_min".into(), "need gamma_min in (0, 1] and eta >= 0".into());
        }
        if self.agents.is_empty() {
            push("agents".into(), "at least one agent is required".into());
        }
        let mut ids = BTreeSet::new();
        for (k, a) in self.agents.iter().enumerate() {
            if !ids.insert(a.id) {
                push(format!("agents[{k}].id"), format!("duplicate agent id {}", a.id));
            }
            if !(a.u_max > 0.0) {
                push(format!("agents[{k}].u_max"), "u_max must be positive".into());
            }
            if let Some(t) = &a.task {
                if let Err(e) = schedule_of(t, 2, self.nu, self.lambda) {
                    push(format!("agents[{k}].task"), e.to_string());
                }
            }
        }
        let mut leaders = BTreeSet::new();
        let index: BTreeMap<u32, usize> = self.agents.iter().enumerate().map(|(i, a)| (a.id, i)).collect();
        let mut graph = UnGraph::<u32, ()>::new_undirected();
        let nodes: Vec<_> = self.agents.iter().map(|a| graph.add_node(a.id)).collect();
        for (k, e) in self.edges.iter().enumerate() {
            match (index.get(&e.leader), index.get(&e.follower)) {
                (Some(&i), Some(&j)) if i != j => {
                    graph.add_edge(nodes[i], nodes[j], ());
                }
                _ => push(format!("edges[{k}]"), format!("edge ({}, {}) needs two distinct known agents", e.leader, e.follower)),
            }
            if !leaders.insert(e.leader) {
                push(format!("edges[{k}].leader"), format!("agent {} already leads an edge", e.leader));
            }
            if let Err(err) = schedule_of(&e.task, 4, self.nu, self.lambda) {
                push(format!("edges[{k}].task"), err.to_string());
            }
        }
        if !self.agents.is_empty() && (connected_components(&graph) != 1 || is_cyclic_undirected(&graph)) {
            push("edges".into(), "task graph must be connected and acyclic".into());
        }
        issues
    }
}

fn schedule_of(text: &str, dim: usize, nu: f64, lambda: f64) -> Result<TaskSchedule, CbfError> {
    let f = parse(text)?;
    let s = TaskSchedule::from_formula(&f, nu, lambda)?;
    if let Some(t) = s.tasks().iter().find(|t| t.predicate.dim() > dim) {
        return Err(CbfError::UnsupportedTask(format!("predicate '{}' uses more than {dim} state variables", t.predicate)));
    }
    Ok(s)
}

/// Role of one agent on the task graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Roles {
    pub lead: Option<(u32, InputBox)>,
    pub follow: Vec<u32>,
}

/// Controller component; task formulas come from the knowledge database.
pub struct CbfController {
    roles: Roles,
    input_box: InputBox,
    params: CbfParams,
    local: Option<LocalController>,
    log: Arc<Mutex<Vec<BarrierRecord>>>,
}

impl CbfController {
    pub fn new(roles: Roles, input_box: InputBox, params: CbfParams, log: Arc<Mutex<Vec<BarrierRecord>>>) -> Self {
        Self { roles, input_box, params, local: None, log }
    }
}

#[derive(Debug, Clone)]
pub struct CbfOutput {
    pub time: f64,
    pub epsilons: Vec<(u32, f64)>,
    pub step: LocalStep,
    pub risk: f64,
    pub gamma: f64,
}

fn position(state: &[f64]) -> Result<[f64; 2], ComponentError> {
    state.get(..2).map(|s| [s[0], s[1]]).ok_or_else(|| ComponentError::failed("expected a planar position"))
}

fn to_component(e: CbfError) -> ComponentError {
    ComponentError::failed(e.to_string())
}

impl Component for CbfController {
    type Output = CbfOutput;

    fn kind(&self) -> ComponentKind {
        ComponentKind::Controller
    }

    fn name(&self) -> &str {
        "cbf"
    }

    fn initialize(&mut self, _ctx: &InitContext, state: &mut AgentState) -> Result<(), ComponentError> {
        let (nu, lambda) = (self.params.nu, self.params.lambda);
        let formula = |key: &str| -> Result<String, ComponentError> {
            state
                .knowledge
                .get(key)
                .and_then(KnowledgeValue::as_str)
                .map(str::to_string)
                .ok_or_else(|| ComponentError::failed(format!("knowledge '{key}' is missing")))
        };
        let own = match state.knowledge.get(SELF_TASK_KEY) {
            Some(_) => Some(schedule_of(&formula(SELF_TASK_KEY)?, 2, nu, lambda).map_err(to_component)?),
            None => None,
        };
        let lead = match self.roles.lead {
            Some((follower, follower_box)) => Some(LeadEdge {
                follower,
                schedule: schedule_of(&formula(&edge_task_key(follower))?, 4, nu, lambda).map_err(to_component)?,
                follower_box,
            }),
            None => None,
        };
        let mut follow = BTreeMap::new();
        for &leader in &self.roles.follow {
            follow.insert(leader, schedule_of(&formula(&edge_task_key(leader))?, 4, nu, lambda).map_err(to_component)?);
        }
        self.local = Some(LocalController {
            id: state.id,
            input_box: self.input_box,
            gamma: 1.0,
            params: self.params,
            own,
            lead,
            follow,
        });
        Ok(())
    }

    fn compute(&mut self, view: &WorldView<'_>) -> Result<CbfOutput, ComponentError> {
        let local = self.local.as_mut().ok_or_else(|| ComponentError::failed("controller not initialized"))?;
        let x = position(view.state.awareness.belief())?;
        let peer = |id: u32| -> Result<[f64; 2], ComponentError> {
            let p = view.state.others.get(&id).ok_or_else(|| ComponentError::failed(format!("agent {id} not perceived")))?;
            position(p.awareness.belief())
        };
        let leaders = local.follow.keys().map(|&l| Ok((l, peer(l)?))).collect::<Result<BTreeMap<_, _>, ComponentError>>()?;
        let epsilons = local.epsilons(x, &leaders, view.time).map_err(to_component)?;
        let partner = local.lead.as_ref().map(|l| l.follower);
        let fresh = partner.and_then(|r| {
            view.state
                .inbox
                .iter()
                .rev()
                .filter(|m| m.sender == r && (m.sim_time - view.time).abs() < 1e-9)
                .find_map(|m| match m.payload {
                    Payload::Epsilon(e) => Some(e),
                    _ => None,
                })
        });
        let partner_state = partner.map(peer).transpose()?;
        let step = local.control(x, partner_state, fresh, view.time, view.step).map_err(to_component)?;
        if step.degraded {
            debug!(agent = local.id, step = view.step, "no fresh epsilon, using worst case");
        }
        let neighbors = local.neighbors().into_iter().filter_map(|n| peer(n).ok()).collect::<Vec<_>>();
        let risk = local.adapt_gamma(x, &neighbors);
        Ok(CbfOutput { time: view.time, epsilons, step, risk, gamma: local.gamma })
    }

    fn update(&mut self, state: &mut AgentState, out: CbfOutput) -> Result<(), ComponentError> {
        state.control_input = out.step.u.to_vec();
        for (leader, eps) in &out.epsilons {
            state.knowledge.insert(format!("{EPS_PREFIX}{leader}"), KnowledgeValue::Vector(vec![out.time, *eps]));
        }
        let flag = |b: bool| KnowledgeValue::Scalar(f64::from(u8::from(b)));
        state.knowledge.insert("cbf:degraded", flag(out.step.degraded));
        state.knowledge.insert("cbf:feasible", flag(out.step.qp.feasible));
        state.knowledge.insert("cbf:gamma", KnowledgeValue::Scalar(out.gamma));
        if let Some(b) = out.step.barrier_min {
            state.knowledge.insert("cbf:barrier_min", KnowledgeValue::Scalar(b));
        }
        state.awareness.set_risk(out.risk)?;
        self.log.lock().expect("barrier log").extend(out.step.records);
        Ok(())
    }
}

/// Sends the epsilons computed this sample to the edge leaders.
pub struct EpsilonSender {
    endpoint: Endpoint,
}

impl EpsilonSender {
    pub fn new(endpoint: Endpoint) -> Self {
        Self { endpoint }
    }
}

impl Component for EpsilonSender {
    type Output = Vec<(u32, f64, f64)>;

    fn kind(&self) -> ComponentKind {
        ComponentKind::CommSender
    }

    fn name(&self) -> &str {
        "epsilon_sender"
    }

    fn compute(&mut self, view: &WorldView<'_>) -> Result<Self::Output, ComponentError> {
        Ok(view
            .state
            .knowledge
            .with_prefix(EPS_PREFIX)
            .filter_map(|(k, v)| {
                let leader: u32 = k[EPS_PREFIX.len()..].parse().ok()?;
                match v.as_vector()? {
                    [t, e] if (t - view.time).abs() < 1e-9 => Some((leader, *t, *e)),
                    _ => None,
                }
            })
            .collect())
    }

    fn update(&mut self, _state: &mut AgentState, out: Self::Output) -> Result<(), ComponentError> {
        for (leader, t, eps) in out {
            self.endpoint.send(Recipient::Agent(leader), t, Payload::Epsilon(eps))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FormationReport {
    pub steps: u64,
    /// Smallest value over every live barrier sample.
    pub min_barrier: Option<f64>,
    /// Samples below `-1e-6` of barriers that started positive.
    pub invariance_violations: usize,
    pub barrier_min_by_owner: BTreeMap<String, f64>,
    /// Robustness at time zero of each agent's local task.
    pub robustness: BTreeMap<u32, f64>,
    pub degraded_steps: BTreeMap<u32, u64>,
    pub infeasible_steps: BTreeMap<u32, u64>,
    pub epsilon_messages: u64,
    /// Positions per sample, agents in id order.
    pub positions: Vec<Vec<[f64; 2]>>,
}

struct Monitor {
    report: Arc<Mutex<FormationReport>>,
}

fn positions(world: &World2D, ids: &[u32]) -> Vec<[f64; 2]> {
    ids.iter().map(|&id| world.state_of(id).map(|s| [s[0], s[1]]).unwrap_or([f64::NAN; 2])).collect()
}

impl StepHook for Monitor {
    fn after_step(&mut self, ctx: &mut HookContext<'_>, _: &StepReport) -> Result<HookControl, String> {
        let mut r = self.report.lock().expect("report lock");
        r.steps += 1;
        let ids: Vec<u32> = ctx.agents.iter().map(|a| a.id()).collect();
        for a in ctx.agents.iter() {
            let k = &a.state().knowledge;
            if k.get("cbf:degraded").and_then(KnowledgeValue::as_scalar) == Some(1.0) {
                *r.degraded_steps.entry(a.id()).or_default() += 1;
            }
            if k.get("cbf:feasible").and_then(KnowledgeValue::as_scalar) == Some(0.0) {
                *r.infeasible_steps.entry(a.id()).or_default() += 1;
            }
        }
        r.positions.push(positions(ctx.world, &ids));
        Ok(HookControl::Continue)
    }
}

/// Robustness of each agent's local task on a position history (`dt`
/// spacing, agents in id order): the own task for agents that have one,
/// the led edge task for leaders.
pub fn local_robustness(cfg: &FormationConfig, history: &[Vec<[f64; 2]>]) -> Result<BTreeMap<u32, f64>, CbfError> {
    let mut ids: Vec<u32> = cfg.agents.iter().map(|a| a.id).collect();
    ids.sort_unstable();
    let col = |id: u32| ids.iter().position(|x| *x == id).expect("known agent");
    let mut out = BTreeMap::new();
    for a in &cfg.agents {
        let mut parts: Vec<Formula> = Vec::new();
        let mut states: Vec<Vec<f64>> = history.iter().map(|row| row[col(a.id)].to_vec()).collect();
        if let Some(e) = cfg.edges.iter().find(|e| e.leader == a.id) {
            let f = col(e.follower);
            for (s, row) in states.iter_mut().zip(history) {
                s.extend(row[f]);
            }
            parts.push(parse(&e.task)?);
        }
        if let Some(t) = &a.task {
            parts.push(parse(t)?);
        }
        if parts.is_empty() {
            continue;
        }
        let trace = Trace::uniform(0.0, cfg.dt, states)?;
        out.insert(a.id, stl_robustness_at(&trace, &Formula::conjunction(parts), 0)?);
    }
    Ok(out)
}

/// Recomputes every barrier sample from a position history, activating
/// sub-tasks exactly as the controllers do.
pub fn replay_barriers(cfg: &FormationConfig, history: &[Vec<[f64; 2]>]) -> Result<Vec<BarrierRecord>, CbfError> {
    let mut ids: Vec<u32> = cfg.agents.iter().map(|a| a.id).collect();
    ids.sort_unstable();
    let col = |id: u32| ids.iter().position(|x| *x == id).expect("known agent");
    let mut tracks: Vec<(String, usize, usize, TaskSchedule)> = Vec::new();
    for a in &cfg.agents {
        if let Some(t) = &a.task {
            tracks.push((format!("self:{}", a.id), col(a.id), usize::MAX, schedule_of(t, 2, cfg.nu, cfg.lambda)?));
        }
    }
    for e in &cfg.edges {
        tracks.push((
            format!("edge:{}-{}", e.leader, e.follower),
            col(e.leader),
            col(e.follower),
            schedule_of(&e.task, 4, cfg.nu, cfg.lambda)?,
        ));
    }
    let mut out = Vec::new();
    for (k, row) in history.iter().enumerate() {
        let t = k as f64 * cfg.dt;
        for (owner, i, j, schedule) in &mut tracks {
            let mut x = row[*i].to_vec();
            if *j != usize::MAX {
                x.extend(row[*j]);
            }
            for task in schedule.advance(&x, t)? {
                let b = schedule.barrier(task).expect("live barrier");
                out.push(BarrierRecord {
                    step: k as u64,
                    time: t,
                    owner: owner.clone(),
                    task,
                    value: b.value(&x, t)?,
                    initial: b.delta0,
                });
            }
        }
    }
    Ok(out)
}

pub struct FormationRun {
    pub report: FormationReport,
    pub records: Vec<BarrierRecord>,
    pub trace: TraceLog,
    pub summary: RunSummary,
}

/// World, agents and shared handles of the scenario.
pub struct FormationParts {
    pub world: World2D,
    pub agents: Vec<Agent>,
    pub hub: Arc<InProcessHub>,
    pub log: Arc<Mutex<Vec<BarrierRecord>>>,
}

pub fn build_agents(cfg: &FormationConfig, seed: u64) -> Result<FormationParts, CbfError> {
    if let Some(i) = cfg.validate("formation").first() {
        return Err(CbfError::Config(i.to_string()));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for a in &cfg.agents {
        for d in 0..2 {
            lo[d] = lo[d].min(a.start[d]);
            hi[d] = hi[d].max(a.start[d]);
        }
    }
    let reach = cfg.agents.iter().map(|a| a.u_max).fold(0.0, f64::max) * cfg.t_end * std::f64::consts::SQRT_2;
    let bounds = Rect::new([lo[0] - reach, lo[1] - reach], [hi[0] + reach, hi[1] + reach]);
    let mut world = World2D::new(bounds, cfg.dt, seed).map_err(|e| CbfError::Config(e.to_string()))?;
    let hub = Arc::new(InProcessHub::default());
    let log = Arc::new(Mutex::new(Vec::new()));
    let params = cfg.params();
    let mut agents = Vec::new();
    for a in &cfg.agents {
        let model = Arc::new(SingleIntegratorModel::with_speed_limit(a.u_max, NoiseSpec::none()));
        world
            .add_entity(Entity::modeled(a.id, model, a.start.to_vec(), Shape::Disc { radius: 0.1 }))
            .map_err(|e| CbfError::Config(e.to_string()))?;
        let lead = cfg.edges.iter().find(|e| e.leader == a.id).map(|e| {
            let f = cfg.spec(e.follower).expect("validated");
            (e.follower, InputBox::symmetric(f.u_max))
        });
        let follow: Vec<u32> = cfg.edges.iter().filter(|e| e.follower == a.id).map(|e| e.leader).collect();
        let endpoint = Endpoint::new(a.id, hub.clone())?;
        let mut agent = Agent::new(a.id)
            .bind_entity(a.id)
            .with_component(RangePerception::new(Sensing::Omniscient))
            .with_component(CbfController::new(
                Roles { lead, follow: follow.clone() },
                InputBox::symmetric(a.u_max),
                params,
                log.clone(),
            ));
        if lead.is_some() {
            agent = agent.with_component(Inbox::new(endpoint.clone()));
        }
        if !follow.is_empty() {
            agent = agent.with_component(EpsilonSender::new(endpoint));
        }
        let k = &mut agent.state_mut().knowledge;
        if let Some(t) = &a.task {
            k.insert(SELF_TASK_KEY, KnowledgeValue::Formula(t.clone()));
        }
        for e in cfg.edges.iter().filter(|e| e.leader == a.id || e.follower == a.id) {
            let partner = if e.leader == a.id { e.follower } else { e.leader };
            k.insert(edge_task_key(partner), KnowledgeValue::Formula(e.task.clone()));
        }
        agents.push(agent);
    }
    Ok(FormationParts { world, agents, hub, log })
}

/// Synchronous run of the scenario; tweak links through [`hub`](Self::hub)
/// before [`run`](Self::run).
pub struct Formation {
    cfg: FormationConfig,
    coordinator: SyncCoordinator,
    hub: Arc<InProcessHub>,
    log: Arc<Mutex<Vec<BarrierRecord>>>,
    report: Arc<Mutex<FormationReport>>,
}

impl Formation {
    pub fn new(cfg: &FormationConfig, seed: u64) -> Result<Self, CbfError> {
        let parts = build_agents(cfg, seed)?;
        let ids: Vec<u32> = {
            let mut v: Vec<u32> = cfg.agents.iter().map(|a| a.id).collect();
            v.sort_unstable();
            v
        };
        let report = Arc::new(Mutex::new(FormationReport {
            positions: vec![positions(&parts.world, &ids)],
            ..FormationReport::default()
        }));
        let mut coordinator = SyncCoordinator::new(parts.world, seed);
        for a in parts.agents {
            coordinator.add_agent(a)?;
        }
        coordinator.add_hook(Monitor { report: report.clone() });
        Ok(Self { cfg: cfg.clone(), coordinator, hub: parts.hub, log: parts.log, report })
    }

    pub fn hub(&self) -> &Arc<InProcessHub> {
        &self.hub
    }

    pub fn coordinator(&self) -> &SyncCoordinator {
        &self.coordinator
    }

    pub fn run(mut self) -> Result<FormationRun, CbfError> {
        self.coordinator.initialize()?;
        self.coordinator.run(self.cfg.steps())?;
        let records = std::mem::take(&mut *self.log.lock().expect("barrier log"));
        let mut report = std::mem::take(&mut *self.report.lock().expect("report lock"));
        for r in &records {
            report.min_barrier = Some(report.min_barrier.map_or(r.value, |m| m.min(r.value)));
            let e = report.barrier_min_by_owner.entry(format!("{}#{}", r.owner, r.task)).or_insert(f64::INFINITY);
            *e = e.min(r.value);
            if r.initial > 0.0 && r.value < -1e-6 {
                report.invariance_violations += 1;
            }
        }
        report.robustness = local_robustness(&self.cfg, &report.positions)?;
        report.epsilon_messages = self.hub.stats().0;
        info!(min_barrier = ?report.min_barrier, violations = report.invariance_violations, "formation finished");
        Ok(FormationRun { report, records, trace: self.coordinator.trace(), summary: self.coordinator.summary().clone() })
    }
}

pub fn run_formation(cfg: &FormationConfig, seed: u64) -> Result<FormationRun, CbfError> {
    Formation::new(cfg, seed)?.run()
}
