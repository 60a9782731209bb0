//! Temporal logic: formula AST and parser, finite-trace LTL satisfaction,
//! sampled STL robustness, Monte-Carlo risk estimation, and transition
//! system / GR(1) data types.

mod formula;
mod fts;
mod ltl;
mod parser;
mod risk;
mod stl;

pub use formula::{AffineExpr, Formula, Interval, Predicate};
pub use fts::{Fts, FtsState, Gr1Part, Gr1Spec};
pub use ltl::{ltl_satisfies, ltl_satisfaction_vector, Letter, Word};
pub use parser::parse;
pub use risk::{estimate_risk, hoeffding_half_width, RiskEstimate, RiskQuery};
pub use stl::{stl_robustness, stl_robustness_at, stl_robustness_vector, Trace};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogicError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("invalid interval [{lo}, {hi}]: need 0 <= a <= b")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("state has dimension {got}, predicate needs at least {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("atom '{0}' is not in the word's alphabet")]
    UnknownAtom(String),
    #[error("real-valued predicate '{0}' cannot be evaluated on a propositional word")]
    PredicateInLtl(String),
    #[error("atomic proposition '{0}' has no robustness on a real-valued trace")]
    AtomInStl(String),
    #[error("trace ends at t = {trace_end} but the formula needs samples up to t = {needed}")]
    InsufficientTrace { needed: f64, trace_end: f64 },
    #[error("t = {0} is not a sample time of the trace")]
    NotSampleTime(f64),
    #[error("index {index} is outside a word of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("words and traces must be non-empty")]
    Empty,
    #[error("trace times must be strictly increasing (sample {0})")]
    NonIncreasingTimes(usize),
    #[error("sample count must be at least 1")]
    InvalidSampleCount,
    #[error("confidence must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("ill-formed specification: {0}")]
    IllFormed(String),
}
