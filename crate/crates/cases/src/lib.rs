//! Case-study controllers built on the `masim-core` kernel.
//!
//! - [`mpc`]: an ownship avoiding an intruder whose intent is a Dubins path,
//!   with a scenario-tree model predictive controller.
//! - [`cbf`]: decentralized min-norm barrier controllers for a team with
//!   local timed tasks and formation tasks on a task graph.
//! - [`tasking`]: risk-aware auction of timed fetch tasks in a warehouse.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod cbf;
pub mod mpc;
pub mod tasking;

/// One configuration problem, with a dotted path into the config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl Issue {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}
