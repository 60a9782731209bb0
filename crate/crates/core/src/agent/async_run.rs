//! Concurrent scheduler: every component loops in its own task, paced by
//! its gate, while the world steps in a separate task.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use tokio::sync::watch;
use tokio::time::MissedTickBehavior;
use tracing::{info, warn};

use super::agent::{emit, trace_row, Agent, Gate, Slot};
use super::component::{AgentState, ComponentError, DynComponent, InitContext, WorldView};
use super::coordinator::{record_world, refresh_belief, CoordinatorError};
use super::events::{EventBus, Phase};
use super::trace::{TraceLog, TraceRow};
use super::AgentId;
use crate::env::World2D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsyncConfig {
    pub wall_duration: Duration,
    /// Gate period of components registered without an explicit gate.
    pub default_period: f64,
    /// Wall seconds between world steps; `None` leaves the world frozen.
    pub world_period: Option<f64>,
    pub worker_threads: usize,
}

impl Default for AsyncConfig {
    fn default() -> Self {
        Self { wall_duration: Duration::from_secs(1), default_period: 0.1, world_period: Some(0.1), worker_threads: 4 }
    }
}

#[derive(Debug)]
pub struct AsyncReport {
    pub world: World2D,
    pub agents: Vec<Agent>,
    pub trace: TraceLog,
    /// Completed iterations per (agent, component name).
    pub iterations: BTreeMap<(AgentId, String), u64>,
    pub world_steps: u64,
}

pub struct AsyncCoordinator {
    world: World2D,
    agents: Vec<Agent>,
    bus: EventBus,
    seed: u64,
}

fn check_period(p: f64, what: &str) -> Result<(), CoordinatorError> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(CoordinatorError::Config(format!("{what} period must be > 0, got {p}")))
    }
}

impl AsyncCoordinator {
    pub fn new(world: World2D, seed: u64) -> Self {
        Self { world, agents: Vec::new(), bus: EventBus::new(), seed }
    }

    pub fn add_agent(&mut self, agent: Agent) -> Result<(), CoordinatorError> {
        if self.agents.iter().any(|a| a.id() == agent.id()) {
            return Err(CoordinatorError::DuplicateAgent(agent.id()));
        }
        self.agents.push(agent);
        self.agents.sort_by_key(Agent::id);
        Ok(())
    }

    pub fn bus(&self) -> &EventBus {
        &self.bus
    }

    /// Initializes agents, runs every component task for
    /// `config.wall_duration` and hands the agents back.
    pub fn run(mut self, config: AsyncConfig) -> Result<AsyncReport, CoordinatorError> {
        check_period(config.default_period, "default gate")?;
        if let Some(p) = config.world_period {
            check_period(p, "world")?;
        }
        for agent in &self.agents {
            for slot in &agent.slots {
                if let Some(Gate::Period(p)) = slot.gate {
                    check_period(p, slot.component.name())?;
                }
            }
        }
        for agent in &mut self.agents {
            if let Some(entity) = agent.state().entity {
                if self.world.entity(entity).is_none() {
                    return Err(CoordinatorError::UnboundEntity { agent: agent.id(), entity });
                }
            }
            let ctx = InitContext { agent_id: agent.id(), seed: self.seed ^ u64::from(agent.id()), dt: self.world.dt() };
            agent.initialize(&ctx, &self.bus)?;
            refresh_belief(&self.world, agent.state_mut());
        }
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(config.worker_threads.max(1))
            .enable_time()
            .build()
            .map_err(|e| CoordinatorError::Config(format!("runtime: {e}")))?;
        let mut init_rows = Vec::new();
        record_world(&self.world, "init", &mut init_rows);
        let world = Arc::new(RwLock::new(self.world));
        let trace = Arc::new(Mutex::new(init_rows));
        let bus = self.bus.clone();
        let agents = std::mem::take(&mut self.agents);

        let (world_in, trace_in) = (world.clone(), trace.clone());
        let (report_agents, iterations, world_steps) = runtime.block_on(async move {
            let (world, trace) = (world_in, trace_in);
            let (stop_tx, stop_rx) = watch::channel(false);
            let mut states = Vec::new();
            let mut handles = Vec::new();
            for agent in agents {
                let Agent { state, slots, .. } = agent;
                let id = state.id;
                let shared = Arc::new(RwLock::new(state));
                states.push(shared.clone());
                for (index, slot) in slots.into_iter().enumerate() {
                    let task = ComponentTask {
                        slot,
                        state: shared.clone(),
                        world: world.clone(),
                        bus: bus.clone(),
                        trace: trace.clone(),
                        default_period: config.default_period,
                    };
                    handles.push((id, index, tokio::spawn(task.run(stop_rx.clone()))));
                }
            }
            let world_task = config.world_period.map(|p| {
                tokio::spawn(step_world(world.clone(), states.clone(), trace.clone(), p, stop_rx.clone()))
            });
            tokio::time::sleep(config.wall_duration).await;
            let _ = stop_tx.send(true);

            let mut slots_by_agent: BTreeMap<AgentId, Vec<(usize, Slot)>> = BTreeMap::new();
            let mut iterations = BTreeMap::new();
            for (id, index, handle) in handles {
                let (slot, count) = handle.await.expect("component task panicked");
                iterations.insert((id, slot.component.name().to_string()), count);
                slots_by_agent.entry(id).or_default().push((index, slot));
            }
            let world_steps = match world_task {
                Some(h) => h.await.expect("world task panicked"),
                None => 0,
            };
            let mut agents = Vec::new();
            for shared in states {
                let state = shared.read().unwrap_or_else(|e| e.into_inner()).clone();
                let mut slots = slots_by_agent.remove(&state.id).unwrap_or_default();
                slots.sort_by_key(|(i, _)| *i);
                agents.push(Agent::reassemble(state, slots.into_iter().map(|(_, s)| s).collect()));
            }
            (agents, iterations, world_steps)
        });

        let world = Arc::try_unwrap(world)
            .map(|l| l.into_inner().unwrap_or_else(|e| e.into_inner()))
            .unwrap_or_else(|arc| arc.read().unwrap_or_else(|e| e.into_inner()).clone());
        let rows = std::mem::take(&mut *trace.lock().unwrap_or_else(|e| e.into_inner()));
        let mut log = TraceLog::new();
        rows.into_iter().for_each(|r| log.push(r));
        info!(world_steps, "async run finished");
        Ok(AsyncReport { world, agents: report_agents, trace: log, iterations, world_steps })
    }
}

impl Agent {
    pub(crate) fn reassemble(state: AgentState, slots: Vec<Slot>) -> Agent {
        let mut agent = Agent::new(state.id);
        agent.state = state;
        agent.slots = slots;
        agent.mark_initialized();
        agent
    }
}

struct ComponentTask {
    slot: Slot,
    state: Arc<RwLock<AgentState>>,
    world: Arc<RwLock<World2D>>,
    bus: EventBus,
    trace: Arc<Mutex<Vec<TraceRow>>>,
    default_period: f64,
}

impl ComponentTask {
    async fn run(mut self, mut stop: watch::Receiver<bool>) -> (Slot, u64) {
        let gate = self.slot.gate.clone().unwrap_or(Gate::Period(self.default_period));
        let mut interval = match &gate {
            Gate::Period(p) => {
                let mut i = tokio::time::interval(Duration::from_secs_f64(*p));
                i.set_missed_tick_behavior(MissedTickBehavior::Delay);
                Some(i)
            }
            Gate::OnMessage(_) => None,
        };
        let mut count = 0;
        loop {
            tokio::select! {
                biased;
                _ = stop.changed() => break,
                _ = async {
                    match (&gate, interval.as_mut()) {
                        (Gate::Period(_), Some(i)) => { i.tick().await; }
                        (Gate::OnMessage(n), _) => n.notified().await,
                        _ => unreachable!("period gates own an interval"),
                    }
                } => {}
            }
            if *stop.borrow() {
                break;
            }
            if self.iterate() {
                count += 1;
            }
            tokio::task::yield_now().await;
        }
        (self.slot, count)
    }

    /// One compute/update pass; compute works on a snapshot so no lock is
    /// held while it runs.
    fn iterate(&mut self) -> bool {
        let snapshot = self.state.read().unwrap_or_else(|e| e.into_inner()).clone();
        let world = self.world.read().unwrap_or_else(|e| e.into_inner()).clone();
        let (step, time) = (world.step_index(), world.time());
        let c: &mut dyn DynComponent = self.slot.component.as_mut();
        emit(&self.bus, Phase::PreCompute, &snapshot, c, step, time, None, None);
        let view = WorldView { state: &snapshot, world: &world, step, time };
        let output = match c.compute_any(&view) {
            Ok(o) => o,
            Err(e) => {
                self.fail(&snapshot, step, time, &e);
                return false;
            }
        };
        emit(&self.bus, Phase::PostCompute, &snapshot, self.slot.component.as_ref(), step, time, Some(output.as_ref()), None);
        let mut guard = self.state.write().unwrap_or_else(|e| e.into_inner());
        let c: &mut dyn DynComponent = self.slot.component.as_mut();
        emit(&self.bus, Phase::PreUpdate, &guard, c, step, time, None, None);
        if let Err(e) = c.update_any(&mut guard, output) {
            let state = guard.clone();
            drop(guard);
            self.fail(&state, step, time, &e);
            return false;
        }
        emit(&self.bus, Phase::PostUpdate, &guard, c, step, time, None, None);
        let row = trace_row(&guard, c, Phase::PostUpdate, step, time);
        drop(guard);
        self.trace.lock().unwrap_or_else(|e| e.into_inner()).push(row);
        true
    }

    fn fail(&self, state: &AgentState, step: u64, time: f64, err: &ComponentError) {
        let c = self.slot.component.as_ref();
        warn!(agent = state.id, component = c.name(), error = %err, "component iteration failed");
        emit(&self.bus, Phase::ComponentError, state, c, step, time, None, Some(err));
        self.trace.lock().unwrap_or_else(|e| e.into_inner()).push(trace_row(state, c, Phase::ComponentError, step, time));
    }
}

async fn step_world(
    world: Arc<RwLock<World2D>>,
    states: Vec<Arc<RwLock<AgentState>>>,
    trace: Arc<Mutex<Vec<TraceRow>>>,
    period: f64,
    mut stop: watch::Receiver<bool>,
) -> u64 {
    let mut interval = tokio::time::interval(Duration::from_secs_f64(period));
    interval.set_missed_tick_behavior(MissedTickBehavior::Delay);
    interval.tick().await;
    let mut steps = 0;
    loop {
        tokio::select! {
            biased;
            _ = stop.changed() => break,
            _ = interval.tick() => {}
        }
        let inputs = states
            .iter()
            .filter_map(|s| {
                let s = s.read().unwrap_or_else(|e| e.into_inner());
                match (s.entity, s.control_input.is_empty()) {
                    (Some(e), false) => Some((e, s.control_input.clone())),
                    _ => None,
                }
            })
            .collect();
        let mut w = world.write().unwrap_or_else(|e| e.into_inner());
        if let Err(e) = w.step(&inputs) {
            warn!(error = %e, "world step failed; stopping world task");
            break;
        }
        for s in &states {
            refresh_belief(&w, &mut s.write().unwrap_or_else(|e| e.into_inner()));
        }
        let mut rows = Vec::new();
        record_world(&w, "step", &mut rows);
        drop(w);
        trace.lock().unwrap_or_else(|e| e.into_inner()).extend(rows);
        steps += 1;
    }
    steps
}
