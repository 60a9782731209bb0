use std::sync::Arc;

use thiserror::Error;
use tokio::sync::Notify;
use tracing::warn;

use super::component::{AgentState, Component, ComponentError, ComponentKind, DynComponent, InitContext, WorldView};
use super::events::{Event, EventBus, Phase};
use super::trace::TraceRow;
use super::AgentId;
use crate::env::{EntityId, World2D};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent {0} has no controller component")]
    NoController(AgentId),
    #[error("agent {0} has more than one controller component")]
    MultipleControllers(AgentId),
    #[error("agent {0} is not initialized")]
    NotInitialized(AgentId),
    #[error("agent {0} is already initialized")]
    AlreadyInitialized(AgentId),
    #[error("agent {agent}: component '{component}' failed to initialize: {source}")]
    Init {
        agent: AgentId,
        component: String,
        #[source]
        source: ComponentError,
    },
}

/// When a component iterates in asynchronous runs.
#[derive(Debug, Clone)]
pub enum Gate {
    /// Every `period` wall-clock seconds.
    Period(f64),
    /// Whenever the notifier fires, typically on message delivery.
    OnMessage(Arc<Notify>),
}

pub(crate) struct Slot {
    pub component: Box<dyn DynComponent>,
    /// `None` means "use the run's default period".
    pub gate: Option<Gate>,
}

/// Collection of components over one shared [`AgentState`].
pub struct Agent {
    pub(crate) state: AgentState,
    pub(crate) slots: Vec<Slot>,
    initialized: bool,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("id", &self.state.id)
            .field("components", &self.component_names())
            .field("initialized", &self.initialized)
            .finish()
    }
}

/// Result of one compute/update pass of one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationOutcome {
    Updated,
    ComputeFailed,
    UpdateFailed,
}

impl Agent {
    pub fn new(id: AgentId) -> Self {
        Self { state: AgentState::new(id), slots: Vec::new(), initialized: false }
    }

    pub fn bind_entity(mut self, entity: EntityId) -> Self {
        self.state.entity = Some(entity);
        self
    }

    pub fn with_component<C: Component>(mut self, component: C) -> Self {
        self.slots.push(Slot { component: Box::new(component), gate: None });
        self
    }

    pub fn with_gated_component<C: Component>(mut self, component: C, gate: Gate) -> Self {
        self.slots.push(Slot { component: Box::new(component), gate: Some(gate) });
        self
    }

    pub fn id(&self) -> AgentId {
        self.state.id
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    /// Setup access (knowledge, initial awareness). Components should not be
    /// bypassed this way once a run has started.
    pub fn state_mut(&mut self) -> &mut AgentState {
        &mut self.state
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub(crate) fn mark_initialized(&mut self) {
        self.initialized = true;
    }

    /// Component names in execution order.
    pub fn component_names(&self) -> Vec<String> {
        self.slots.iter().map(|s| s.component.name().to_string()).collect()
    }

    /// Orders components by kind (stable within a kind), checks the single
    /// controller rule and runs every component's initializer.
    pub fn initialize(&mut self, ctx: &InitContext, bus: &EventBus) -> Result<(), AgentError> {
        let id = self.state.id;
        if self.initialized {
            return Err(AgentError::AlreadyInitialized(id));
        }
        match self.slots.iter().filter(|s| s.component.kind() == ComponentKind::Controller).count() {
            0 => return Err(AgentError::NoController(id)),
            1 => {}
            _ => return Err(AgentError::MultipleControllers(id)),
        }
        self.slots.sort_by_key(|s| s.component.kind());
        for slot in &mut self.slots {
            let c = &mut slot.component;
            emit(bus, Phase::PreInit, &self.state, c.as_ref(), 0, 0.0, None, None);
            c.initialize(ctx, &mut self.state).map_err(|source| AgentError::Init {
                agent: id,
                component: c.name().to_string(),
                source,
            })?;
            emit(bus, Phase::PostInit, &self.state, c.as_ref(), 0, 0.0, None, None);
        }
        self.initialized = true;
        Ok(())
    }

    /// Runs every component once, in order. Component failures are reported
    /// as events and trace rows and do not stop the iteration.
    pub fn step(
        &mut self,
        world: &World2D,
        step: u64,
        time: f64,
        bus: &EventBus,
        trace: &mut Vec<TraceRow>,
    ) -> Result<Vec<IterationOutcome>, AgentError> {
        if !self.initialized {
            return Err(AgentError::NotInitialized(self.state.id));
        }
        let mut outcomes = Vec::with_capacity(self.slots.len());
        for slot in &mut self.slots {
            outcomes.push(iterate(slot.component.as_mut(), &mut self.state, world, step, time, bus, trace));
        }
        Ok(outcomes)
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn emit(
    bus: &EventBus,
    phase: Phase,
    state: &AgentState,
    c: &dyn DynComponent,
    step: u64,
    time: f64,
    payload: Option<&(dyn std::any::Any + Send)>,
    error: Option<&ComponentError>,
) {
    bus.emit(&Event {
        phase,
        agent_id: state.id,
        kind: c.kind(),
        component: c.name(),
        step,
        time,
        awareness: &state.awareness,
        payload,
        error,
    });
}

pub(crate) fn trace_row(state: &AgentState, c: &dyn DynComponent, phase: Phase, step: u64, time: f64) -> TraceRow {
    TraceRow {
        step,
        time,
        agent_id: state.id,
        component: c.name().to_string(),
        phase: phase.as_str().to_string(),
        belief: state.awareness.belief().to_vec(),
        risk: state.awareness.risk(),
    }
}

fn report_failure(
    bus: &EventBus,
    state: &AgentState,
    c: &dyn DynComponent,
    step: u64,
    time: f64,
    err: &ComponentError,
    trace: &mut Vec<TraceRow>,
) {
    warn!(agent = state.id, component = c.name(), step, error = %err, "component iteration failed");
    emit(bus, Phase::ComponentError, state, c, step, time, None, Some(err));
    trace.push(trace_row(state, c, Phase::ComponentError, step, time));
}

fn iterate(
    c: &mut dyn DynComponent,
    state: &mut AgentState,
    world: &World2D,
    step: u64,
    time: f64,
    bus: &EventBus,
    trace: &mut Vec<TraceRow>,
) -> IterationOutcome {
    emit(bus, Phase::PreCompute, state, c, step, time, None, None);
    let view = WorldView { state, world, step, time };
    let output = match c.compute_any(&view) {
        Ok(o) => o,
        Err(e) => {
            report_failure(bus, state, c, step, time, &e, trace);
            return IterationOutcome::ComputeFailed;
        }
    };
    emit(bus, Phase::PostCompute, state, c, step, time, Some(output.as_ref()), None);
    emit(bus, Phase::PreUpdate, state, c, step, time, None, None);
    if let Err(e) = c.update_any(state, output) {
        report_failure(bus, state, c, step, time, &e, trace);
        return IterationOutcome::UpdateFailed;
    }
    emit(bus, Phase::PostUpdate, state, c, step, time, None, None);
    trace.push(trace_row(state, c, Phase::PostUpdate, step, time));
    IterationOutcome::Updated
}
