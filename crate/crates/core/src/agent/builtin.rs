//! Generic components usable by any scenario.

use super::awareness::{AwarenessVector, IntentSample};
use super::component::{AgentState, Component, ComponentError, ComponentKind, PeerAwareness, WorldView};
use super::knowledge::KnowledgeValue;
use crate::comms::{Endpoint, Message, Payload, Recipient};
use crate::env::{Percept, Sensing};

/// Proportional goal tracker: `control_input = goal - belief`, with the goal
/// read from knowledge key `"goal"` (scalar or vector).
#[derive(Debug, Clone, Default)]
pub struct GoalController {
    gain: f64,
}

impl GoalController {
    pub fn new() -> Self {
        Self { gain: 1.0 }
    }

    pub fn with_gain(gain: f64) -> Self {
        Self { gain }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalCommand {
    pub input: Vec<f64>,
    pub goal: Vec<f64>,
    pub time: f64,
}

impl Component for GoalController {
    type Output = GoalCommand;

    fn kind(&self) -> ComponentKind {
        ComponentKind::Controller
    }

    fn compute(&mut self, view: &WorldView<'_>) -> Result<GoalCommand, ComponentError> {
        let belief = view.state.awareness.belief();
        let goal = match view.state.knowledge.get("goal") {
            Some(KnowledgeValue::Scalar(g)) => vec![*g; belief.len().max(1)],
            Some(KnowledgeValue::Vector(g)) => g.clone(),
            Some(_) => return Err(ComponentError::failed("knowledge 'goal' must be a scalar or vector")),
            None => belief.to_vec(),
        };
        let input = goal.iter().zip(belief).map(|(g, b)| self.gain * (g - b)).collect();
        Ok(GoalCommand { input, goal, time: view.time })
    }

    fn update(&mut self, state: &mut AgentState, out: GoalCommand) -> Result<(), ComponentError> {
        state.awareness.set_intent(vec![IntentSample { time: out.time, state: out.goal, input: out.input.clone() }])?;
        state.control_input = out.input;
        Ok(())
    }
}

/// Fills `others` from a world perception query around the bound entity.
#[derive(Debug, Clone)]
pub struct RangePerception {
    sensing: Sensing,
}

impl RangePerception {
    pub fn new(sensing: Sensing) -> Self {
        Self { sensing }
    }
}

impl Component for RangePerception {
    type Output = (f64, Vec<Percept>);

    fn kind(&self) -> ComponentKind {
        ComponentKind::Perception
    }

    fn compute(&mut self, view: &WorldView<'_>) -> Result<Self::Output, ComponentError> {
        let Some(entity) = view.state.entity else {
            return Ok((view.time, Vec::new()));
        };
        Ok((view.time, view.world.perceive(entity, self.sensing)?))
    }

    fn update(&mut self, state: &mut AgentState, (time, percepts): Self::Output) -> Result<(), ComponentError> {
        for p in percepts {
            state.others.insert(p.id, PeerAwareness { awareness: AwarenessVector::new(p.pose), stamp: time });
        }
        Ok(())
    }
}

/// Broadcasts the agent's own awareness every iteration.
#[derive(Debug, Clone)]
pub struct AwarenessBroadcaster {
    endpoint: Endpoint,
}

impl AwarenessBroadcaster {
    pub fn new(endpoint: Endpoint) -> Self {
        Self { endpoint }
    }
}

impl Component for AwarenessBroadcaster {
    type Output = (f64, AwarenessVector);

    fn kind(&self) -> ComponentKind {
        ComponentKind::CommSender
    }

    fn compute(&mut self, view: &WorldView<'_>) -> Result<Self::Output, ComponentError> {
        Ok((view.time, view.state.awareness.clone()))
    }

    fn update(&mut self, _state: &mut AgentState, (time, awareness): Self::Output) -> Result<(), ComponentError> {
        self.endpoint.send(Recipient::Broadcast, time, Payload::Awareness(awareness))?;
        Ok(())
    }
}

/// Drains the agent's queue. Awareness messages update `others`, knowledge
/// messages are merged into the database, and every message is left in
/// `inbox` for later components of the same iteration.
#[derive(Debug, Clone)]
pub struct Inbox {
    endpoint: Endpoint,
}

impl Inbox {
    pub fn new(endpoint: Endpoint) -> Self {
        Self { endpoint }
    }
}

impl Component for Inbox {
    type Output = Vec<Message>;

    fn kind(&self) -> ComponentKind {
        ComponentKind::CommReceiver
    }

    fn compute(&mut self, _view: &WorldView<'_>) -> Result<Vec<Message>, ComponentError> {
        Ok(self.endpoint.receive()?)
    }

    fn update(&mut self, state: &mut AgentState, messages: Vec<Message>) -> Result<(), ComponentError> {
        for m in &messages {
            match &m.payload {
                Payload::Awareness(a) => {
                    state.others.insert(m.sender, PeerAwareness { awareness: a.clone(), stamp: m.sim_time });
                }
                Payload::Knowledge(entries) => {
                    for (k, v) in entries {
                        state.knowledge.insert(k.clone(), v.clone());
                    }
                }
                Payload::Epsilon(_) | Payload::Task(_) => {}
            }
        }
        state.inbox = messages;
        Ok(())
    }
}
