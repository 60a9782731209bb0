use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info};

use super::agent::{Agent, AgentError, IterationOutcome};
use super::component::InitContext;
use super::events::EventBus;
use super::trace::{TraceLog, TraceRow};
use super::AgentId;
use crate::env::{Collision, EntityId, EnvError, StepReport, World2D};

#[derive(Debug, Error)]
pub enum CoordinatorError {
    #[error("duplicate agent id {0}")]
    DuplicateAgent(AgentId),
    #[error("agent {agent} is bound to unknown entity {entity}")]
    UnboundEntity { agent: AgentId, entity: EntityId },
    #[error("setup: {0}")]
    Agent(#[from] AgentError),
    #[error("environment error at step {step}: {source}")]
    Env {
        step: u64,
        #[source]
        source: EnvError,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("step hook failed at step {step}: {message}")]
    Hook { step: u64, message: String },
}

/// What a hook asks the coordinator to do after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HookControl {
    Continue,
    Stop,
}

pub struct HookContext<'a> {
    pub step: u64,
    pub time: f64,
    pub world: &'a mut World2D,
    pub agents: &'a mut [Agent],
}

impl HookContext<'_> {
    pub fn agent_mut(&mut self, id: AgentId) -> Option<&mut Agent> {
        self.agents.iter_mut().find(|a| a.id() == id)
    }
}

/// Scenario-level logic run around the agents of every synchronous step,
/// such as task issuing or termination checks.
pub trait StepHook: Send {
    fn before_agents(&mut self, _ctx: &mut HookContext<'_>) -> Result<(), String> {
        Ok(())
    }

    fn after_step(&mut self, _ctx: &mut HookContext<'_>, _report: &StepReport) -> Result<HookControl, String> {
        Ok(HookControl::Continue)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub stopped_by_hook: bool,
    pub invocations: u64,
    pub component_failures: u64,
    pub boundary_violations: Vec<(u64, EntityId)>,
    pub collisions: Vec<(u64, Collision)>,
    pub clamped_inputs: u64,
}

/// Deterministic single-threaded scheduler.
///
/// Each step runs hooks, then every agent's components in order with agents
/// in id order, then steps the world once and refreshes each bound agent's
/// belief from its entity state.
pub struct SyncCoordinator {
    world: World2D,
    agents: Vec<Agent>,
    bus: EventBus,
    hooks: Vec<Box<dyn StepHook>>,
    trace: Vec<TraceRow>,
    seed: u64,
    summary: RunSummary,
    initialized: bool,
}

impl SyncCoordinator {
    pub fn new(world: World2D, seed: u64) -> Self {
        Self {
            world,
            agents: Vec::new(),
            bus: EventBus::new(),
            hooks: Vec::new(),
            trace: Vec::new(),
            seed,
            summary: RunSummary::default(),
            initialized: false,
        }
    }

    pub fn add_agent(&mut self, agent: Agent) -> Result<(), CoordinatorError> {
        let pos = match self.agents.binary_search_by_key(&agent.id(), Agent::id) {
            Ok(_) => return Err(CoordinatorError::DuplicateAgent(agent.id())),
            Err(p) => p,
        };
        self.agents.insert(pos, agent);
        Ok(())
    }

    pub fn add_hook(&mut self, hook: impl StepHook + 'static) {
        self.hooks.push(Box::new(hook));
    }

    pub fn bus(&self) -> &EventBus {
        &self.bus
    }

    pub fn world(&self) -> &World2D {
        &self.world
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent(&self, id: AgentId) -> Option<&Agent> {
        self.agents.iter().find(|a| a.id() == id)
    }

    pub fn agent_mut(&mut self, id: AgentId) -> Option<&mut Agent> {
        self.agents.iter_mut().find(|a| a.id() == id)
    }

    pub fn summary(&self) -> &RunSummary {
        &self.summary
    }

    pub fn trace(&self) -> TraceLog {
        let mut log = TraceLog::new();
        for r in &self.trace {
            log.push(r.clone());
        }
        log
    }

    pub fn into_parts(self) -> (World2D, Vec<Agent>, TraceLog) {
        let mut log = TraceLog::new();
        for r in self.trace {
            log.push(r);
        }
        (self.world, self.agents, log)
    }

    /// Initializes every agent (seed = master seed xor agent id), checks
    /// entity bindings and records the initial world state.
    pub fn initialize(&mut self) -> Result<(), CoordinatorError> {
        for agent in &mut self.agents {
            if let Some(entity) = agent.state().entity {
                if self.world.entity(entity).is_none() {
                    return Err(CoordinatorError::UnboundEntity { agent: agent.id(), entity });
                }
            }
            let ctx = InitContext { agent_id: agent.id(), seed: self.seed ^ u64::from(agent.id()), dt: self.world.dt() };
            agent.initialize(&ctx, &self.bus)?;
        }
        refresh_beliefs(&self.world, &mut self.agents);
        record_world(&self.world, "init", &mut self.trace);
        self.initialized = true;
        info!(agents = self.agents.len(), seed = self.seed, "sync coordinator initialized");
        Ok(())
    }

    /// Runs up to `n_steps` steps, fewer if a hook asks to stop.
    pub fn run(&mut self, n_steps: u64) -> Result<&RunSummary, CoordinatorError> {
        if let Some(a) = self.agents.iter().find(|a| !a.is_initialized()) {
            return Err(AgentError::NotInitialized(a.id()).into());
        }
        if !self.initialized {
            return Err(CoordinatorError::Config("coordinator not initialized".into()));
        }
        for _ in 0..n_steps {
            if self.step_once()? == HookControl::Stop {
                self.summary.stopped_by_hook = true;
                break;
            }
        }
        Ok(&self.summary)
    }

    pub fn step_once(&mut self) -> Result<HookControl, CoordinatorError> {
        let step = self.world.step_index();
        let time = self.world.time();
        for hook in &mut self.hooks {
            let mut ctx = HookContext { step, time, world: &mut self.world, agents: &mut self.agents };
            hook.before_agents(&mut ctx).map_err(|message| CoordinatorError::Hook { step, message })?;
        }
        for agent in &mut self.agents {
            for outcome in agent.step(&self.world, step, time, &self.bus, &mut self.trace)? {
                self.summary.invocations += 1;
                if outcome != IterationOutcome::Updated {
                    self.summary.component_failures += 1;
                }
            }
        }
        let report = self
            .world
            .step(&collect_inputs(&self.agents))
            .map_err(|source| CoordinatorError::Env { step, source })?;
        refresh_beliefs(&self.world, &mut self.agents);
        record_world(&self.world, "step", &mut self.trace);
        self.summary.steps += 1;
        self.summary.boundary_violations.extend(report.boundary_violations.iter().map(|id| (step, *id)));
        self.summary.collisions.extend(report.collisions.iter().map(|c| (step, *c)));
        self.summary.clamped_inputs += report.clamped.len() as u64;
        debug!(step, "world stepped");
        let mut control = HookControl::Continue;
        for hook in &mut self.hooks {
            let mut ctx = HookContext { step, time, world: &mut self.world, agents: &mut self.agents };
            if hook.after_step(&mut ctx, &report).map_err(|message| CoordinatorError::Hook { step, message })?
                == HookControl::Stop
            {
                control = HookControl::Stop;
            }
        }
        Ok(control)
    }
}

pub(crate) fn collect_inputs(agents: &[Agent]) -> BTreeMap<EntityId, Vec<f64>> {
    agents
        .iter()
        .filter_map(|a| {
            let s = a.state();
            match (s.entity, s.control_input.is_empty()) {
                (Some(e), false) => Some((e, s.control_input.clone())),
                _ => None,
            }
        })
        .collect()
}

pub(crate) fn refresh_beliefs(world: &World2D, agents: &mut [Agent]) {
    for agent in agents {
        refresh_belief(world, agent.state_mut());
    }
}

pub(crate) fn refresh_belief(world: &World2D, state: &mut super::component::AgentState) {
    if let Some(pose) = state.entity.and_then(|e| world.state_of(e).ok()) {
        state.awareness.set_belief(pose.to_vec());
    }
}

/// One row per modeled entity, component "environment".
pub(crate) fn record_world(world: &World2D, phase: &str, trace: &mut Vec<TraceRow>) {
    for e in world.entities().filter(|e| e.model.is_some()) {
        trace.push(TraceRow {
            step: world.step_index(),
            time: world.time(),
            agent_id: e.id,
            component: "environment".into(),
            phase: phase.into(),
            belief: e.state.clone(),
            risk: 0.0,
        });
    }
}
