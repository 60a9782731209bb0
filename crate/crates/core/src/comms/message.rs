use serde::{Deserialize, Serialize};

use crate::agent::{AgentId, AwarenessVector, KnowledgeValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Recipient {
    Agent(AgentId),
    Broadcast,
}

/// Step of the task auction protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskAction {
    /// New task; `spec` is a structured description (JSON text).
    Announce { spec: String },
    Bid { risk: f64 },
    Award { winner: AgentId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMessage {
    pub task_id: u64,
    pub action: TaskAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Awareness(AwarenessVector),
    Knowledge(Vec<(String, KnowledgeValue)>),
    /// Follower's worst-case barrier derivative term for an edge leader.
    Epsilon(f64),
    Task(TaskMessage),
}

impl Payload {
    /// Wire tag of the payload kind.
    pub fn kind(&self) -> u8 {
        match self {
            Payload::Awareness(_) => 1,
            Payload::Knowledge(_) => 2,
            Payload::Epsilon(_) => 3,
            Payload::Task(_) => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: AgentId,
    pub recipient: Recipient,
    /// Per-sender counter, strictly increasing.
    pub seq: u64,
    pub sim_time: f64,
    pub payload: Payload,
}
