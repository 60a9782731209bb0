//! Finite transition systems and GR(1) specifications as plain data with
//! well-formedness checks. No synthesis or model checking happens here.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::formula::Formula;
use super::LogicError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtsState {
    pub name: String,
    /// Successor indices into [`Fts::states`].
    pub successors: Vec<usize>,
    /// Index into [`Fts::observations`].
    pub observation: usize,
    pub labels: BTreeSet<String>,
}

/// `T = (Q, Q0, F, O, obs, L)` with states stored by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fts {
    pub states: Vec<FtsState>,
    pub initial: Vec<usize>,
    pub observations: Vec<String>,
}

impl Fts {
    pub fn validate(&self) -> Result<(), LogicError> {
        let n = self.states.len();
        if self.initial.is_empty() {
            return Err(LogicError::IllFormed("no initial state".into()));
        }
        if let Some(q) = self.initial.iter().find(|&&q| q >= n) {
            return Err(LogicError::IllFormed(format!("initial state {q} does not exist")));
        }
        for (i, s) in self.states.iter().enumerate() {
            if let Some(q) = s.successors.iter().find(|&&q| q >= n) {
                return Err(LogicError::IllFormed(format!("state '{}' has successor {q} outside Q", s.name)));
            }
            if s.observation >= self.observations.len() {
                return Err(LogicError::IllFormed(format!("state {i} maps to unknown observation {}", s.observation)));
            }
        }
        Ok(())
    }

    /// Labels visited along a path of state indices.
    pub fn word_of(&self, path: &[usize]) -> Result<Vec<BTreeSet<String>>, LogicError> {
        for w in path.windows(2) {
            if !self.states[w[0]].successors.contains(&w[1]) {
                return Err(LogicError::IllFormed(format!("no transition {} -> {}", w[0], w[1])));
            }
        }
        Ok(path.iter().map(|&q| self.states[q].labels.clone()).collect())
    }
}

/// One side of a GR(1) specification: initial condition, safety (`G`) and
/// fairness (`G F`) bodies.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Gr1Part {
    pub initial: Vec<Formula>,
    pub safety: Vec<Formula>,
    pub fairness: Vec<Formula>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Gr1Spec {
    pub env: Gr1Part,
    pub sys: Gr1Part,
}

impl Gr1Spec {
    /// Initial conditions must be propositional, safety bodies may use `X`
    /// once on propositional operands, fairness bodies must be propositional.
    pub fn validate(&self) -> Result<(), LogicError> {
        for (side, part) in [("env", &self.env), ("sys", &self.sys)] {
            if let Some(f) = part.initial.iter().find(|f| !f.is_propositional()) {
                return Err(LogicError::IllFormed(format!("{side} initial condition '{f}' is temporal")));
            }
            if let Some(f) = part.safety.iter().find(|f| !single_next(f, false)) {
                return Err(LogicError::IllFormed(format!("{side} safety body '{f}' is not a one-step formula")));
            }
            if let Some(f) = part.fairness.iter().find(|f| !f.is_propositional()) {
                return Err(LogicError::IllFormed(format!("{side} fairness body '{f}' is temporal")));
            }
        }
        Ok(())
    }

    /// The assume-guarantee formula `(I_e & G S_e & G F L_e) -> (I_s & G S_s & G F L_s)`.
    pub fn to_formula(&self) -> Formula {
        fn side(p: &Gr1Part) -> Formula {
            let always = |f: &Formula| Formula::always(super::Interval::unbounded(), f.clone());
            let recurrent = |f: &Formula| always(&Formula::eventually(super::Interval::unbounded(), f.clone()));
            Formula::conjunction(
                p.initial
                    .iter()
                    .cloned()
                    .chain(p.safety.iter().map(always))
                    .chain(p.fairness.iter().map(recurrent)),
            )
        }
        Formula::or(Formula::not(side(&self.env)), side(&self.sys))
    }
}

fn single_next(f: &Formula, under_next: bool) -> bool {
    match f {
        Formula::True | Formula::False | Formula::Atom(_) | Formula::Pred(_) => true,
        Formula::Not(x) => single_next(x, under_next),
        Formula::And(a, b) | Formula::Or(a, b) => single_next(a, under_next) && single_next(b, under_next),
        Formula::Next(x) => !under_next && single_next(x, true),
        _ => false,
    }
}
