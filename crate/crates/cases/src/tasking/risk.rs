use std::collections::VecDeque;

use masim_core::env::{advance, NoiseSpec, Rect, SingleIntegratorModel};
use masim_core::logic::{estimate_risk, Formula, Interval, RiskEstimate, RiskQuery, Trace};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::map::{point_along, WarehouseMap};
use super::task::{in_rect, leg_formula, FetchTask};
use super::TaskingError;
use crate::Issue;

/// What a robot can do: speed bound per axis and actuation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapabilityProfile {
    pub max_speed: f64,
    /// Standard deviation of the velocity noise, per axis.
    pub noise: f64,
    #[serde(default)]
    pub equipment: String,
}

impl CapabilityProfile {
    pub fn model(&self) -> SingleIntegratorModel {
        let noise = if self.noise > 0.0 { NoiseSpec::gaussian(self.noise).actuated() } else { NoiseSpec::none() };
        SingleIntegratorModel::with_speed_limit(self.max_speed, noise)
    }

    pub fn validate(&self, path: &str) -> Vec<Issue> {
        let mut issues = Vec::new();
        if !(self.max_speed > 0.0) {
            issues.push(Issue::new(format!("{path}.max_speed"), "must be positive"));
        }
        if !(self.noise >= 0.0) {
            issues.push(Issue::new(format!("{path}.noise"), "must be non-negative"));
        }
        issues
    }
}

/// An accepted task with its regions resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Commitment {
    pub task: FetchTask,
    pub origin: Option<Rect>,
    pub destination: Rect,
    pub origin_visited: bool,
}

impl Commitment {
    pub fn new(task: FetchTask, map: &WarehouseMap) -> Result<Self, TaskingError> {
        let origin = task.kind.origin().map(|o| map.region(o)).transpose()?;
        let destination = map.region(task.kind.destination())?;
        Ok(Self { task, origin, destination, origin_visited: false })
    }

    /// Region the robot is currently heading for.
    pub fn target(&self) -> &Rect {
        match &self.origin {
            Some(o) if !self.origin_visited => o,
            _ => &self.destination,
        }
    }

    /// What is left of the task, seen from `step`.
    pub fn formula(&self, step: u64) -> Formula {
        let origin = self.origin.as_ref().filter(|_| !self.origin_visited);
        leg_formula(origin, &self.destination, self.task.due_step() as i64 - step as i64)
    }
}

/// Records region visits at `pos` and pops finished tasks off the front of
/// the queue, returning their ids.
pub fn progress(queue: &mut VecDeque<Commitment>, pos: [f64; 2]) -> Vec<u64> {
    let mut done = Vec::new();
    while let Some(front) = queue.front_mut() {
        if let Some(o) = &front.origin {
            if !front.origin_visited && o.contains(pos) {
                front.origin_visited = true;
            }
        }
        let ready = front.origin.is_none() || front.origin_visited;
        if ready && front.destination.contains(pos) {
            done.push(front.task.id);
            queue.pop_front();
        } else {
            break;
        }
    }
    done
}

/// Velocity that moves `speed * dt` along the shortest path towards the
/// center of `target`.
pub fn nominal_velocity(map: &WarehouseMap, pos: [f64; 2], target: &Rect, speed: f64, dt: f64) -> [f64; 2] {
    let goal = target.center();
    let path = map.shortest_path(pos, goal).unwrap_or_else(|| vec![pos, goal]);
    let p = point_along(&path, speed * dt);
    [(p[0] - pos[0]) / dt, (p[1] - pos[1]) / dt]
}

/// Parameters shared by every risk query of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSettings {
    pub n_samples: usize,
    pub dt: f64,
    pub epsilon: f64,
    /// Steps before an award reaches the robot; the queue runs unchanged
    /// until then.
    pub award_delay: usize,
}

impl Default for RiskSettings {
    fn default() -> Self {
        Self { n_samples: 200, dt: 1.0, epsilon: 0.2, award_delay: 1 }
    }
}

/// One noisy closed-loop rollout of `horizon` steps from `pos`: the robot
/// works through `queue`, and `extra` joins the queue after `delay` steps.
/// An empty queue means standing still.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    map: &WarehouseMap,
    profile: &CapabilityProfile,
    pos: [f64; 2],
    queue: &VecDeque<Commitment>,
    extra: Option<&Commitment>,
    delay: usize,
    horizon: usize,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let model = profile.model();
    let mut q = queue.clone();
    let mut x = pos;
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x.to_vec());
    for k in 0..horizon {
        progress(&mut q, x);
        if k == delay {
            if let Some(e) = extra {
                q.push_back(e.clone());
                progress(&mut q, x);
            }
        }
        let v = match q.front() {
            Some(c) => nominal_velocity(map, x, c.target(), profile.max_speed, dt),
            None => [0.0, 0.0],
        };
        let next = advance(&model, &x, &v, dt, rng).state;
        x = [next[0], next[1]];
        states.push(next);
    }
    states
}

/// Monte-Carlo risk that appending `task` to `queue` makes some deadline
/// fail or takes the robot out of the warehouse, seen from state `pos` at
/// `step`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_task_risk(
    map: &WarehouseMap,
    profile: &CapabilityProfile,
    pos: [f64; 2],
    queue: &VecDeque<Commitment>,
    task: &FetchTask,
    step: u64,
    settings: &RiskSettings,
    seed: u64,
) -> Result<RiskEstimate, TaskingError> {
    let new = Commitment::new(task.clone(), map)?;
    let horizon = queue
        .iter()
        .chain(std::iter::once(&new))
        .map(|c| c.task.due_step().saturating_sub(step))
        .max()
        .unwrap_or(0);
    let mut parts: Vec<Formula> = queue.iter().map(|c| c.formula(step)).collect();
    parts.push(new.formula(step));
    parts.push(Formula::always(Interval { lo: 0.0, hi: horizon as f64 }, in_rect(&map.bounds.rect())));
    let formula = Formula::conjunction(parts);
    let query = RiskQuery { n_samples: settings.n_samples, seed, confidence: 0.95, epsilon: settings.epsilon };
    let source = |rng: &mut ChaCha8Rng| {
        let states = rollout(map, profile, pos, queue, Some(&new), settings.award_delay, horizon as usize, settings.dt, rng);
        Trace::uniform(0.0, 1.0, states).expect("non-empty rollout")
    };
    Ok(estimate_risk(source, &formula, &query)?)
}
