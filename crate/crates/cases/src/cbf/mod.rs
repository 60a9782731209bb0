//! Decentralized sampled-data barrier controllers for timed tasks on a task
//! graph. Each edge has one leader that enforces the edge barrier using the
//! follower's worst-case contribution, received as a message.

use masim_core::agent::CoordinatorError;
use masim_core::comms::CommError;
use masim_core::logic::LogicError;
use thiserror::Error;

pub mod barrier;
pub mod control;
pub mod formation;
pub mod qp;

pub use barrier::{build_barrier, lipschitz_margin, smooth_min, split_tasks, Barrier, BarrierEval, TaskSchedule, TaskSpec, TemporalOp};
pub use control::{
    decentralized_step, epsilon_single_integrator, epsilon_term, update_gamma, BarrierRecord, CbfParams, LeadEdge,
    LocalController, LocalStep, TeamStep,
};
pub use formation::{
    build_agents, local_robustness, replay_barriers, run_formation, CbfAgentSpec, EdgeSpec, Formation,
    FormationConfig, FormationReport, FormationRun,
};
pub use qp::{solve_min_norm, InputBox, LinearConstraint, QpSolution};

#[derive(Debug, Error)]
pub enum CbfError {
    #[error("unsupported task: {0}")]
    UnsupportedTask(String),
    #[error("task activated at t = {t0} after its deadline t* = {t_star}")]
    LateActivation { t0: f64, t_star: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("agent {agent} has no state for agent {peer}")]
    MissingPeer { agent: u32, peer: u32 },
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
}
