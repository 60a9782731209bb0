//! Closed-loop encounter: a Dubins-flying intruder (agent 1) and an ownship
//! (agent 2) running the scenario-tree controller, both as agents on the
//! synchronous coordinator.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use masim_core::agent::{
    Agent, AgentState, Component, ComponentError, ComponentKind, HookContext, HookControl, InitContext, IntentSample,
    KnowledgeValue, RangePerception, RunSummary, StepHook, SyncCoordinator, TraceLog, WorldView,
};
use masim_core::env::{Entity, InputBound, NoiseSpec, Rect, Sensing, Shape, StepReport, UnicycleModel, World2D};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::dubins::DubinsIntent;
use super::solver::{separation, solve_mpc, IntruderView, MpcConfig, MpcProblem, MpcSolution};
use super::tree::{has_arrived, ScenarioTree};
use super::MpcError;
use crate::Issue;

pub const INTRUDER: u32 = 1;
pub const OWNSHIP: u32 = 2;
/// Knowledge key holding the intruder intent `[start; target]` on the ownship.
pub const INTENT_KEY: &str = "intent:intruder";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CraftSpec {
    pub start: [f64; 3],
    pub target: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncounterConfig {
    pub mpc: MpcConfig,
    pub ownship: CraftSpec,
    #[serde(default)]
    pub intruder: Option<CraftSpec>,
    /// Step budget `T_max`.
    pub t_max: u64,
}

impl EncounterConfig {
    /// Crossing encounter: the ownship flies east while the intruder crosses
    /// its track northbound, both at unit speed.
    pub fn crossing() -> Self {
        let i3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        Self {
            mpc: MpcConfig {
                horizon: 8,
                robust_horizon: 2,
                q: i3,
                q_f: [[5.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 0.5]],
                r: 1.0,
                rho: 3.0,
                te: 1.0,
                ownship_turn: InputBound::symmetric(0.4),
                ownship_speed: InputBound::new(0.0, 1.0),
                intruder_turn: InputBound::symmetric(0.3),
                intruder_speed: 1.0,
                solver: Default::default(),
            },
            ownship: CraftSpec { start: [0.0, 0.0, 0.0], target: [24.0, 0.0, 0.0] },
            intruder: Some(CraftSpec {
                start: [14.0, -12.0, std::f64::consts::FRAC_PI_2],
                target: [10.0, 12.0, std::f64::consts::FRAC_PI_2],
            }),
            t_max: 60,
        }
    }

    pub fn validate(&self, path: &str) -> Vec<Issue> {
        let mut issues = self.mpc.validate(&format!("{path}.mpc"));
        if self.t_max == 0 {
            issues.push(Issue::new(format!("{path}.t_max"), "t_max must be positive"));
        }
        if let Some(intr) = &self.intruder {
            if let Err(e) = self.intent(intr) {
                issues.push(Issue::new(format!("{path}.intruder"), e.to_string()));
            }
        }
        issues
    }

    fn intent(&self, intr: &CraftSpec) -> Result<DubinsIntent, MpcError> {
        DubinsIntent::new(intr.start, intr.target, self.mpc.intruder_speed, self.mpc.intruder_turn, self.mpc.te)
    }

    /// Arrival tolerance `0.5 v_max te` of the ownship.
    pub fn ownship_tolerance(&self) -> f64 {
        0.5 * self.mpc.ownship_speed.hi * self.mpc.te
    }

    pub fn intruder_tolerance(&self) -> f64 {
        0.5 * self.mpc.intruder_speed * self.mpc.te
    }
}

/// Flies the intruder's Dubins path open loop and stops on arrival.
#[derive(Debug, Clone)]
pub struct DubinsPilot {
    intent: DubinsIntent,
    tolerance: f64,
    preview: usize,
    arrived: bool,
}

impl DubinsPilot {
    pub fn new(intent: DubinsIntent, tolerance: f64, preview: usize) -> Self {
        Self { intent, tolerance, preview, arrived: false }
    }
}

#[derive(Debug, Clone)]
pub struct PilotCommand {
    pub speed: f64,
    pub turn: f64,
    pub arrived: bool,
    pub waypoints: Vec<IntentSample>,
}

fn pose(belief: &[f64]) -> Result<[f64; 3], ComponentError> {
    belief.try_into().map_err(|_| ComponentError::failed(format!("expected a 3-state pose, got {} values", belief.len())))
}

impl Component for DubinsPilot {
    type Output = PilotCommand;

    fn kind(&self) -> ComponentKind {
        ComponentKind::Controller
    }

    fn name(&self) -> &str {
        "dubins_pilot"
    }

    fn compute(&mut self, view: &WorldView<'_>) -> Result<PilotCommand, ComponentError> {
        let s = pose(view.state.awareness.belief())?;
        let arrived = self.arrived || has_arrived(s, self.intent.target, self.tolerance);
        let waypoints = (0..=self.preview)
            .map(|k| {
                let t = view.time + k as f64 * self.intent.te;
                IntentSample { time: t, state: self.intent.waypoint(t).to_vec(), input: vec![self.intent.speed, self.intent.input(t)] }
            })
            .collect();
        let (speed, turn) = if arrived { (0.0, 0.0) } else { (self.intent.speed, self.intent.input(view.time)) };
        Ok(PilotCommand { speed, turn, arrived, waypoints })
    }

    fn update(&mut self, state: &mut AgentState, out: PilotCommand) -> Result<(), ComponentError> {
        self.arrived = out.arrived;
        state.control_input = vec![out.speed, out.turn];
        state.awareness.set_intent(out.waypoints)?;
        state.knowledge.insert("arrived", KnowledgeValue::Scalar(f64::from(u8::from(out.arrived))));
        Ok(())
    }
}

/// Ownship controller solving the scenario-tree program every sample.
#[derive(Debug, Clone)]
pub struct MpcController {
    config: MpcConfig,
    target: [f64; 3],
    own_tolerance: f64,
    intruder_tolerance: f64,
    intent: Option<DubinsIntent>,
    warm: Vec<(f64, f64)>,
    seed: u64,
    arrived: bool,
}

impl MpcController {
    pub fn new(config: MpcConfig, target: [f64; 3], own_tolerance: f64, intruder_tolerance: f64) -> Self {
        Self { config, target, own_tolerance, intruder_tolerance, intent: None, warm: Vec::new(), seed: 0, arrived: false }
    }
}

#[derive(Debug, Clone)]
pub enum MpcStep {
    Hold,
    Solved { solution: MpcSolution, feasible: bool, elapsed_ms: f64, time: f64 },
}

impl Component for MpcController {
    type Output = MpcStep;

    fn kind(&self) -> ComponentKind {
        ComponentKind::Controller
    }

    fn name(&self) -> &str {
        "mpc"
    }

    fn initialize(&mut self, ctx: &InitContext, state: &mut AgentState) -> Result<(), ComponentError> {
        self.seed = ctx.seed;
        if let Some(v) = state.knowledge.get(INTENT_KEY) {
            let v = v.as_vector().filter(|v| v.len() == 6).ok_or_else(|| {
                ComponentError::failed(format!("knowledge '{INTENT_KEY}' must be a 6-vector [start; target]"))
            })?;
            let intent = DubinsIntent::new(
                [v[0], v[1], v[2]],
                [v[3], v[4], v[5]],
                self.config.intruder_speed,
                self.config.intruder_turn,
                self.config.te,
            )
            .map_err(|e| ComponentError::failed(e.to_string()))?;
            self.intent = Some(intent);
        }
        Ok(())
    }

    fn compute(&mut self, view: &WorldView<'_>) -> Result<MpcStep, ComponentError> {
        let own = pose(view.state.awareness.belief())?;
        if self.arrived || has_arrived(own, self.target, self.own_tolerance) {
            return Ok(MpcStep::Hold);
        }
        let intruder = match &self.intent {
            Some(intent) => {
                let peer = view
                    .state
                    .others
                    .get(&INTRUDER)
                    .ok_or_else(|| ComponentError::failed("intruder not perceived"))?;
                Some(IntruderView {
                    state: pose(peer.awareness.belief())?,
                    intent,
                    arrival_tolerance: self.intruder_tolerance,
                })
            }
            None => None,
        };
        let problem = MpcProblem {
            config: &self.config,
            ownship: own,
            target: self.target,
            intruder,
            time: view.time,
            warm_start: Some(&self.warm),
            seed: self.seed ^ view.step.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            enforce_separation: true,
        };
        let started = Instant::now();
        let (solution, feasible) = match solve_mpc(&problem) {
            Ok(s) => (s, true),
            Err(MpcError::Infeasible { best, violation }) => {
                warn!(step = view.step, scenario = violation.scenario, stage = violation.step, "mpc infeasible, applying best effort");
                (*best, false)
            }
            Err(e) => return Err(ComponentError::failed(e.to_string())),
        };
        Ok(MpcStep::Solved { solution, feasible, elapsed_ms: started.elapsed().as_secs_f64() * 1e3, time: view.time })
    }

    fn update(&mut self, state: &mut AgentState, out: MpcStep) -> Result<(), ComponentError> {
        let MpcStep::Solved { solution, feasible, elapsed_ms, time } = out else {
            self.arrived = true;
            state.control_input = vec![0.0, 0.0];
            state.knowledge.insert("arrived", KnowledgeValue::Scalar(1.0));
            return Ok(());
        };
        state.control_input = vec![solution.speed[0], solution.turn[0]];
        self.warm = solution.inputs();
        let te = self.config.te;
        let intent = solution
            .predicted
            .iter()
            .enumerate()
            .map(|(k, s)| IntentSample {
                time: time + k as f64 * te,
                state: s.to_vec(),
                input: solution.turn.get(k).map_or_else(Vec::new, |u| vec![solution.speed[k], *u]),
            })
            .collect();
        state.awareness.set_intent(intent)?;
        state.awareness.set_risk(if feasible { 0.0 } else { 1.0 })?;
        state.knowledge.insert("mpc:cost", KnowledgeValue::Scalar(solution.cost));
        state.knowledge.insert("mpc:feasible", KnowledgeValue::Scalar(f64::from(u8::from(feasible))));
        state.knowledge.insert("mpc:solve_ms", KnowledgeValue::Scalar(elapsed_ms));
        if let Some(d) = solution.min_separation {
            state.knowledge.insert("mpc:predicted_min_separation", KnowledgeValue::Scalar(d));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationSample {
    pub step: u64,
    pub time: f64,
    pub separation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EncounterReport {
    pub steps: u64,
    pub scenario_count: usize,
    pub rho: f64,
    pub min_separation: Option<f64>,
    pub separations: Vec<SeparationSample>,
    pub ownship_arrival_step: Option<u64>,
    pub intruder_arrival_step: Option<u64>,
    /// Optimal cost per solved sample.
    pub costs: Vec<f64>,
    pub infeasible_steps: Vec<u64>,
    pub mean_solve_ms: f64,
    pub max_solve_ms: f64,
}

struct Monitor {
    report: Arc<Mutex<EncounterReport>>,
    r: f64,
    targets: ([f64; 3], Option<[f64; 3]>),
    tolerances: (f64, f64),
    solves: u64,
    strict: bool,
}

impl Monitor {
    fn observe(&mut self, world: &World2D, report: &mut EncounterReport) {
        let own = pose(world.state_of(OWNSHIP).expect("ownship entity")).expect("3-state");
        if report.ownship_arrival_step.is_none() && has_arrived(own, self.targets.0, self.tolerances.0) {
            report.ownship_arrival_step = Some(world.step_index());
        }
        if let (Some(target), Ok(s)) = (self.targets.1, world.state_of(INTRUDER)) {
            let intr = pose(s).expect("3-state");
            if report.intruder_arrival_step.is_none() && has_arrived(intr, target, self.tolerances.1) {
                report.intruder_arrival_step = Some(world.step_index());
            }
            let d = separation(own, intr, self.r);
            report.separations.push(SeparationSample { step: world.step_index(), time: world.time(), separation: d });
            report.min_separation = Some(report.min_separation.map_or(d, |m| m.min(d)));
        }
    }
}

impl StepHook for Monitor {
    fn after_step(&mut self, ctx: &mut HookContext<'_>, _: &StepReport) -> Result<HookControl, String> {
        let shared = self.report.clone();
        let mut report = shared.lock().expect("report lock");
        report.steps = ctx.world.step_index();
        let own = ctx.agent_mut(OWNSHIP).expect("ownship agent");
        let k = &own.state().knowledge;
        let feasible = k.get("mpc:feasible").and_then(KnowledgeValue::as_scalar);
        if let (Some(f), Some(ms)) = (feasible, k.get("mpc:solve_ms").and_then(KnowledgeValue::as_scalar)) {
            if report.ownship_arrival_step.is_none() {
                report.costs.push(k.get("mpc:cost").and_then(KnowledgeValue::as_scalar).unwrap_or(f64::NAN));
                self.solves += 1;
                report.mean_solve_ms += (ms - report.mean_solve_ms) / self.solves as f64;
                report.max_solve_ms = report.max_solve_ms.max(ms);
                if f == 0.0 {
                    report.infeasible_steps.push(ctx.step);
                    if self.strict {
                        return Err("scenario-tree program infeasible".into());
                    }
                }
            }
        }
        self.observe(ctx.world, &mut report);
        let intruder_done = self.targets.1.is_none() || report.intruder_arrival_step.is_some();
        Ok(if report.ownship_arrival_step.is_some() && intruder_done { HookControl::Stop } else { HookControl::Continue })
    }
}

/// World and agents of the encounter, without a scheduler.
pub fn build_agents(cfg: &EncounterConfig, seed: u64) -> Result<(World2D, Vec<Agent>), MpcError> {
    let issues = cfg.validate("encounter");
    if let Some(i) = issues.first() {
        return Err(MpcError::Config(i.to_string()));
    }
    let m = &cfg.mpc;
    let mut lo = [cfg.ownship.start[0].min(cfg.ownship.target[0]), cfg.ownship.start[1].min(cfg.ownship.target[1])];
    let mut hi = [cfg.ownship.start[0].max(cfg.ownship.target[0]), cfg.ownship.start[1].max(cfg.ownship.target[1])];
    if let Some(i) = &cfg.intruder {
        for p in [i.start, i.target] {
            lo = [lo[0].min(p[0]), lo[1].min(p[1])];
            hi = [hi[0].max(p[0]), hi[1].max(p[1])];
        }
    }
    let margin = 100.0;
    let mut world = World2D::new(Rect::new([lo[0] - margin, lo[1] - margin], [hi[0] + margin, hi[1] + margin]), m.te, seed)
        .map_err(|e| MpcError::Config(e.to_string()))?;
    let own_model = Arc::new(UnicycleModel::new(m.ownship_speed, m.ownship_turn, NoiseSpec::none()));
    world
        .add_entity(Entity::modeled(OWNSHIP, own_model, cfg.ownship.start.to_vec(), Shape::Disc { radius: 0.1 }))
        .map_err(|e| MpcError::Config(e.to_string()))?;

    let mut ownship = Agent::new(OWNSHIP).bind_entity(OWNSHIP).with_component(MpcController::new(
        m.clone(),
        cfg.ownship.target,
        cfg.ownship_tolerance(),
        cfg.intruder_tolerance(),
    ));
    let mut agents = Vec::new();
    if let Some(intr) = &cfg.intruder {
        let intent = cfg.intent(intr)?;
        let model = Arc::new(UnicycleModel::new(InputBound::new(0.0, m.intruder_speed), m.intruder_turn, NoiseSpec::none()));
        world
            .add_entity(Entity::modeled(INTRUDER, model, intr.start.to_vec(), Shape::Disc { radius: 0.1 }))
            .map_err(|e| MpcError::Config(e.to_string()))?;
        agents.push(
            Agent::new(INTRUDER)
                .bind_entity(INTRUDER)
                .with_component(DubinsPilot::new(intent, cfg.intruder_tolerance(), m.horizon)),
        );
        ownship = ownship.with_component(RangePerception::new(Sensing::Omniscient));
        let v: Vec<f64> = intr.start.iter().chain(&intr.target).copied().collect();
        ownship.state_mut().knowledge.insert(INTENT_KEY, KnowledgeValue::Vector(v));
    }
    agents.push(ownship);
    Ok((world, agents))
}

pub struct EncounterRun {
    pub report: EncounterReport,
    pub trace: TraceLog,
    pub summary: RunSummary,
}

/// A prepared closed-loop run; subscribe to its event bus before [`run`](Self::run).
pub struct Encounter {
    coordinator: SyncCoordinator,
    report: Arc<Mutex<EncounterReport>>,
    t_max: u64,
}

impl Encounter {
    pub fn new(cfg: &EncounterConfig, seed: u64) -> Result<Self, MpcError> {
        Self::with_options(cfg, seed, true)
    }

    /// `strict = false` keeps flying best-effort solutions instead of
    /// stopping at the first infeasible sample.
    pub fn with_options(cfg: &EncounterConfig, seed: u64, strict: bool) -> Result<Self, MpcError> {
        let (world, agents) = build_agents(cfg, seed)?;
        let report = Arc::new(Mutex::new(EncounterReport {
            scenario_count: ScenarioTree::new(cfg.mpc.robust_horizon).len(),
            rho: cfg.mpc.rho,
            ..EncounterReport::default()
        }));
        let mut monitor = Monitor {
            report: report.clone(),
            r: cfg.mpc.r,
            targets: (cfg.ownship.target, cfg.intruder.as_ref().map(|i| i.target)),
            tolerances: (cfg.ownship_tolerance(), cfg.intruder_tolerance()),
            solves: 0,
            strict,
        };
        monitor.observe(&world, &mut report.lock().expect("report lock"));
        let mut coordinator = SyncCoordinator::new(world, seed);
        for a in agents {
            coordinator.add_agent(a)?;
        }
        coordinator.add_hook(monitor);
        Ok(Self { coordinator, report, t_max: cfg.t_max })
    }

    pub fn coordinator(&self) -> &SyncCoordinator {
        &self.coordinator
    }

    pub fn coordinator_mut(&mut self) -> &mut SyncCoordinator {
        &mut self.coordinator
    }

    pub fn run(mut self) -> Result<EncounterRun, MpcError> {
        self.coordinator.initialize()?;
        if let Err(e) = self.coordinator.run(self.t_max) {
            return Err(match e {
                masim_core::agent::CoordinatorError::Hook { step, message } => MpcError::ClosedLoop { step, message },
                other => other.into(),
            });
        }
        let summary = self.coordinator.summary().clone();
        let trace = self.coordinator.trace();
        let report = self.report.lock().expect("report lock").clone();
        info!(steps = report.steps, min_separation = ?report.min_separation, "encounter finished");
        Ok(EncounterRun { report, trace, summary })
    }
}

/// Runs the encounter to arrival of both craft or `t_max` steps.
pub fn closed_loop(cfg: &EncounterConfig, seed: u64) -> Result<EncounterRun, MpcError> {
    Encounter::new(cfg, seed)?.run()
}
