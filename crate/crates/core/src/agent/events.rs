use std::any::Any;
use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock, Weak};

use serde::{Deserialize, Serialize};
use tracing::error;

use super::awareness::AwarenessVector;
use super::component::{ComponentError, ComponentKind};
use super::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreInit,
    PostInit,
    PreCompute,
    PostCompute,
    PreUpdate,
    PostUpdate,
    ComponentError,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PreInit => "pre_init",
            Phase::PostInit => "post_init",
            Phase::PreCompute => "pre_compute",
            Phase::PostCompute => "post_compute",
            Phase::PreUpdate => "pre_update",
            Phase::PostUpdate => "post_update",
            Phase::ComponentError => "component_error",
        }
    }
}

/// Notification emitted around every component phase.
///
/// `payload` carries the compute output on post-compute events; subscribers
/// can downcast it to the component's output type.
#[derive(Clone, Copy)]
pub struct Event<'a> {
    pub phase: Phase,
    pub agent_id: AgentId,
    pub kind: ComponentKind,
    pub component: &'a str,
    pub step: u64,
    pub time: f64,
    pub awareness: &'a AwarenessVector,
    pub payload: Option<&'a (dyn Any + Send)>,
    pub error: Option<&'a ComponentError>,
}

/// Selects events by phase, agent and component kind. Empty selectors match
/// everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventFilter {
    phases: BTreeSet<Phase>,
    agents: BTreeSet<AgentId>,
    kinds: BTreeSet<ComponentKind>,
}

impl EventFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn phase(mut self, phase: Phase) -> Self {
        self.phases.insert(phase);
        self
    }

    pub fn agent(mut self, id: AgentId) -> Self {
        self.agents.insert(id);
        self
    }

    pub fn kind(mut self, kind: ComponentKind) -> Self {
        self.kinds.insert(kind);
        self
    }

    pub fn matches(&self, e: &Event<'_>) -> bool {
        (self.phases.is_empty() || self.phases.contains(&e.phase))
            && (self.agents.is_empty() || self.agents.contains(&e.agent_id))
            && (self.kinds.is_empty() || self.kinds.contains(&e.kind))
    }
}

pub type Callback = Arc<dyn Fn(&Event<'_>) + Send + Sync>;

struct Subscriber {
    id: u64,
    filter: EventFilter,
    callback: Callback,
}

#[derive(Default)]
struct BusInner {
    subscribers: RwLock<Vec<Arc<Subscriber>>>,
    next_id: AtomicU64,
    failures: AtomicU64,
}

/// Synchronous event dispatcher shared by every agent of a run.
#[derive(Clone, Default)]
pub struct EventBus {
    inner: Arc<BusInner>,
}

/// Returned by [`EventBus::subscribe`].
pub struct Subscription {
    id: u64,
    bus: Weak<BusInner>,
}

impl Subscription {
    pub fn unsubscribe(self) {
        if let Some(bus) = self.bus.upgrade() {
            bus.subscribers.write().unwrap_or_else(|e| e.into_inner()).retain(|s| s.id != self.id);
        }
    }
}

impl EventBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Callbacks run on the emitting component's thread, in subscription
    /// order.
    pub fn subscribe(&self, filter: EventFilter, callback: impl Fn(&Event<'_>) + Send + Sync + 'static) -> Subscription {
        let id = self.inner.next_id.fetch_add(1, Ordering::SeqCst);
        let sub = Arc::new(Subscriber { id, filter, callback: Arc::new(callback) });
        self.inner.subscribers.write().unwrap_or_else(|e| e.into_inner()).push(sub);
        Subscription { id, bus: Arc::downgrade(&self.inner) }
    }

    pub fn subscriber_count(&self) -> usize {
        self.inner.subscribers.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    /// Number of callbacks that panicked so far.
    pub fn callback_failures(&self) -> u64 {
        self.inner.failures.load(Ordering::SeqCst)
    }

    pub fn emit(&self, event: &Event<'_>) {
        // Snapshot so callbacks may (un)subscribe without deadlocking.
        let subs: Vec<Arc<Subscriber>> = {
            let guard = self.inner.subscribers.read().unwrap_or_else(|e| e.into_inner());
            if guard.is_empty() {
                return;
            }
            guard.iter().filter(|s| s.filter.matches(event)).cloned().collect()
        };
        for sub in subs {
            if catch_unwind(AssertUnwindSafe(|| (sub.callback)(event))).is_err() {
                self.inner.failures.fetch_add(1, Ordering::SeqCst);
                error!(
                    subscriber = sub.id,
                    agent = event.agent_id,
                    component = event.component,
                    phase = event.phase.as_str(),
                    "event callback panicked"
                );
            }
        }
    }
}
