//! Risk-aware auction of timed fetch tasks in a walled warehouse.
//!
//! Robots bid the Monte-Carlo risk of failing any deadline in their queue
//! once the new task is appended; an auctioneer assigns each open task to
//! the lowest qualifying bid.

use masim_core::agent::CoordinatorError;
use masim_core::comms::CommError;
use masim_core::logic::LogicError;
use thiserror::Error;

pub mod allocate;
pub mod map;
pub mod risk;
pub mod task;
pub mod warehouse;

pub use allocate::{allocate, Allocation, Bid};
pub use map::{path_length, point_along, NamedRect, WarehouseMap};
pub use risk::{estimate_task_risk, nominal_velocity, progress, rollout, CapabilityProfile, Commitment, RiskSettings};
pub use task::{in_rect, leg_formula, task_to_formula, FetchTask, TaskKind, TaskStatus};
pub use warehouse::{
    build_agents, run_warehouse, BidRecord, RobotSpec, ScheduledTask, TaskRow, Warehouse, WarehouseConfig, WarehouseReport, WarehouseRun, AUCTIONEER,
};

#[derive(Debug, Error)]
pub enum TaskingError {
    #[error("unknown region '{0}'")]
    UnknownRegion(String),
    #[error("no path from {from:?} into region '{region}'")]
    Unreachable { from: [f64; 2], region: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
}
