use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::awareness::{AwarenessError, AwarenessVector};
use super::knowledge::KnowledgeDatabase;
use super::AgentId;
use crate::comms::{CommError, Message};
use crate::env::{EntityId, EnvError, World2D};
use crate::logic::LogicError;

/// Component role; also fixes the execution order inside an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Perception,
    CommReceiver,
    Risk,
    Uncertainty,
    Controller,
    CommSender,
    Custom,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Perception => "perception",
            ComponentKind::CommReceiver => "comm_receiver",
            ComponentKind::Risk => "risk",
            ComponentKind::Uncertainty => "uncertainty",
            ComponentKind::Controller => "controller",
            ComponentKind::CommSender => "comm_sender",
            ComponentKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ComponentError {
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Awareness(#[from] AwarenessError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl ComponentError {
    pub fn failed(msg: impl Into<String>) -> Self {
        ComponentError::Failed(msg.into())
    }
}

/// Last awareness received or perceived for another agent or entity.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerAwareness {
    pub awareness: AwarenessVector,
    /// Simulation time of the observation.
    pub stamp: f64,
}

/// Shared state of one agent. Components read it through [`WorldView`] and
/// mutate it only in [`Component::update`].
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub entity: Option<EntityId>,
    pub awareness: AwarenessVector,
    /// Keyed by agent or entity id; last write wins, entries never expire.
    pub others: BTreeMap<u32, PeerAwareness>,
    pub knowledge: KnowledgeDatabase,
    /// Input handed to the bound entity's model at the next world step.
    pub control_input: Vec<f64>,
    /// Messages drained by the receiver in the current iteration.
    pub inbox: Vec<Message>,
}

impl AgentState {
    pub fn new(id: AgentId) -> Self {
        Self {
            id,
            entity: None,
            awareness: AwarenessVector::default(),
            others: BTreeMap::new(),
            knowledge: KnowledgeDatabase::new(),
            control_input: Vec::new(),
            inbox: Vec::new(),
        }
    }
}

/// Read-only input of the compute phase.
#[derive(Clone, Copy)]
pub struct WorldView<'a> {
    pub state: &'a AgentState,
    pub world: &'a World2D,
    pub step: u64,
    pub time: f64,
}

/// Passed to [`Component::initialize`].
#[derive(Debug, Clone, Copy)]
pub struct InitContext {
    pub agent_id: AgentId,
    /// Per-agent seed, the master seed xor the agent id.
    pub seed: u64,
    pub dt: f64,
}

/// Pluggable unit of agent behavior.
///
/// `compute` sees a snapshot and returns a value; the same value is handed
/// unchanged to `update`, the only phase allowed to touch agent state.
pub trait Component: Send + 'static {
    type Output: Send + 'static;

    fn kind(&self) -> ComponentKind;

    fn name(&self) -> &str {
        self.kind().as_str()
    }

    fn initialize(&mut self, _ctx: &InitContext, _state: &mut AgentState) -> Result<(), ComponentError> {
        Ok(())
    }

    fn compute(&mut self, view: &WorldView<'_>) -> Result<Self::Output, ComponentError>;

    fn update(&mut self, state: &mut AgentState, output: Self::Output) -> Result<(), ComponentError>;
}

/// Object-safe form of [`Component`] used by the schedulers.
pub trait DynComponent: Send {
    fn kind(&self) -> ComponentKind;
    fn name(&self) -> &str;
    fn initialize(&mut self, ctx: &InitContext, state: &mut AgentState) -> Result<(), ComponentError>;
    fn compute_any(&mut self, view: &WorldView<'_>) -> Result<Box<dyn Any + Send>, ComponentError>;
    fn update_any(&mut self, state: &mut AgentState, output: Box<dyn Any + Send>) -> Result<(), ComponentError>;
}

impl<C: Component> DynComponent for C {
    fn kind(&self) -> ComponentKind {
        Component::kind(self)
    }

    fn name(&self) -> &str {
        Component::name(self)
    }

    fn initialize(&mut self, ctx: &InitContext, state: &mut AgentState) -> Result<(), ComponentError> {
        Component::initialize(self, ctx, state)
    }

    fn compute_any(&mut self, view: &WorldView<'_>) -> Result<Box<dyn Any + Send>, ComponentError> {
        Ok(Box::new(self.compute(view)?))
    }

    fn update_any(&mut self, state: &mut AgentState, output: Box<dyn Any + Send>) -> Result<(), ComponentError> {
        let output = output
            .downcast::<C::Output>()
            .map_err(|_| ComponentError::failed("compute output has the wrong type"))?;
        self.update(state, *output)
    }
}
