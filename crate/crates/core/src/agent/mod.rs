//! Agents as ordered collections of components over shared awareness and
//! knowledge, with a deterministic synchronous scheduler, a concurrent
//! asynchronous scheduler and a phase event bus.
//!
//! The per-step awareness update of an agent is the composition of its
//! components' update phases, applied in component order.

#[allow(clippy::module_inception)]
mod agent;
mod async_run;
mod awareness;
mod builtin;
mod component;
mod coordinator;
mod events;
mod knowledge;
mod trace;

pub type AgentId = u32;

pub use agent::{Agent, AgentError, Gate, IterationOutcome};
pub use async_run::{AsyncConfig, AsyncCoordinator, AsyncReport};
pub use awareness::{AwarenessError, AwarenessVector, IntentSample};
pub use builtin::{AwarenessBroadcaster, GoalCommand, GoalController, Inbox, RangePerception};
pub use component::{
    AgentState, Component, ComponentError, ComponentKind, DynComponent, InitContext, PeerAwareness, WorldView,
};
pub use coordinator::{CoordinatorError, HookContext, HookControl, RunSummary, StepHook, SyncCoordinator};
pub use events::{Callback, Event, EventBus, EventFilter, Phase, Subscription};
pub use knowledge::{KnowledgeDatabase, KnowledgeValue};
pub use trace::{TraceError, TraceLog, TraceMeta, TraceRow, TRACE_COLUMNS, TRACE_VERSION};
