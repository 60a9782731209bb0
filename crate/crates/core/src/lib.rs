//! Multi-agent simulation kernel.
//!
//! - [`agent`]: components, awareness, knowledge, schedulers, events, traces
//! - [`comms`]: messages, wire codec, in-process and TCP transports
//! - [`env`]: 2D kinematic world with models, noise and perception
//! - [`logic`]: LTL/STL formulas, satisfaction, robustness, risk estimation

pub mod agent;
pub mod comms;
pub mod env;
pub mod logic;
