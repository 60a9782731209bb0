//! Ownship collision avoidance against an intruder with a known Dubins intent.
//!
//! The intruder's future is a ternary tree: inside the robust horizon each
//! stage branches to maximum turn, minimum turn or nominal intent, and the
//! ownship plan must keep separation from every branch.

use masim_core::agent::CoordinatorError;
use thiserror::Error;

pub mod dubins;
pub mod encounter;
pub mod solver;
pub mod tree;

pub use dubins::{dubins_input, DubinsIntent, DubinsPath, Word};
pub use encounter::{
    build_agents, closed_loop, CraftSpec, DubinsPilot, Encounter, EncounterConfig, EncounterReport, EncounterRun,
    MpcController, SeparationSample, INTRUDER, OWNSHIP,
};
pub use solver::{
    scenario_cost, separation, solve_mpc, ConstraintViolation, IntruderView, Matrix3, MpcConfig, MpcProblem,
    MpcSolution, SolverConfig,
};
pub use tree::{branch_selector, has_arrived, intruder_branch_input, Branch, ScenarioTree};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("dubins path: {0}")]
    Path(String),
    #[error("scenario index {j} outside 1..={count}")]
    ScenarioIndex { j: usize, count: usize },
    #[error("trajectory has {got} states, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no candidate keeps separation: scenario {} stage {} at {:.3}", .violation.scenario, .violation.step, .violation.separation)]
    Infeasible { violation: ConstraintViolation, best: Box<MpcSolution> },
    #[error("closed loop failed at step {step}: {message}")]
    ClosedLoop { step: u64, message: String },
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
}
