use std::collections::{BTreeMap, BTreeSet};

use masim_core::env::InputBound;
use serde::{Deserialize, Serialize};

use super::barrier::{BarrierEval, TaskSchedule};
use super::qp::{solve_min_norm, InputBox, LinearConstraint, QpSolution};
use super::CbfError;

/// `min over u in gamma * U` of `grad . (f + g u)` for a box `U`, attained
/// coordinate-wise at a vertex. `g` is given row-major, `n x m`.
pub fn epsilon_term(grad: &[f64], f: &[f64], g: &[Vec<f64>], bounds: &[InputBound], gamma: f64) -> f64 {
    let drift: f64 = grad.iter().zip(f).map(|(a, b)| a * b).sum();
    let m = bounds.len();
    (0..m)
        .map(|j| {
            let a: f64 = grad.iter().zip(g).map(|(gi, row)| gi * row.get(j).copied().unwrap_or(0.0)).sum();
            (gamma * bounds[j].lo * a).min(gamma * bounds[j].hi * a)
        })
        .sum::<f64>()
        + drift
}

/// Single-integrator form of [`epsilon_term`]: `f = 0`, `g = I`.
pub fn epsilon_single_integrator(grad: [f64; 2], bx: &InputBox, gamma: f64) -> f64 {
    epsilon_term(
        &grad,
        &[0.0, 0.0],
        &[vec![1.0, 0.0], vec![0.0, 1.0]],
        &[InputBound::new(bx.lo[0], bx.hi[0]), InputBound::new(bx.lo[1], bx.hi[1])],
        gamma,
    )
}

/// `clamp(1 - eta * risk, gamma_min, 1)`.
pub fn update_gamma(risk: f64, eta: f64, gamma_min: f64) -> f64 {
    (1.0 - eta * risk.clamp(0.0, 1.0)).clamp(gamma_min, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbfParams {
    pub lambda: f64,
    pub nu: f64,
    pub kappa: f64,
    pub eta: f64,
    pub gamma_min: f64,
    /// Neighbor distance at which the proximity risk reaches zero.
    pub d_safe: f64,
}

/// Row `a . u >= beta` enforcing `db/dt + lambda b >= nu` for the part of
/// `b` this agent controls; `other` is the lower bound on the rest.
fn barrier_row(eval: &BarrierEval, own: std::ops::Range<usize>, other: f64, p: &CbfParams) -> LinearConstraint {
    let a = [eval.gradient[own.start], eval.gradient[own.start + 1]];
    LinearConstraint::new(a, -eval.dt - p.lambda * eval.value + p.nu - other)
}

/// One live sub-task barrier value at a sample, for invariance checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierRecord {
    pub step: u64,
    pub time: f64,
    /// `self:<agent>` or `edge:<leader>-<follower>`.
    pub owner: String,
    pub task: usize,
    pub value: f64,
    /// Value at activation.
    pub initial: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalStep {
    pub u: [f64; 2],
    pub qp: QpSolution,
    /// The leader edge had no fresh epsilon and used the worst case.
    pub degraded: bool,
    /// Smallest live barrier value, merged per constraint.
    pub barrier_min: Option<f64>,
    pub records: Vec<BarrierRecord>,
}

/// Leader side of one task edge.
#[derive(Debug, Clone)]
pub struct LeadEdge {
    pub follower: u32,
    pub schedule: TaskSchedule,
    /// The follower's unscaled input box, for the worst-case fallback.
    pub follower_box: InputBox,
}

/// Everything one agent needs to compute its input from local data.
#[derive(Debug, Clone)]
pub struct LocalController {
    pub id: u32,
    pub input_box: InputBox,
    pub gamma: f64,
    pub params: CbfParams,
    pub own: Option<TaskSchedule>,
    pub lead: Option<LeadEdge>,
    /// Edges this agent follows, keyed by leader.
    pub follow: BTreeMap<u32, TaskSchedule>,
}

fn joint(a: [f64; 2], b: [f64; 2]) -> [f64; 4] {
    [a[0], a[1], b[0], b[1]]
}

fn records(schedule: &TaskSchedule, x: &[f64], t: f64, step: u64, owner: &str) -> Result<Vec<BarrierRecord>, CbfError> {
    schedule
        .live(t)
        .into_iter()
        .map(|k| {
            let b = schedule.barrier(k).expect("live barrier");
            Ok(BarrierRecord {
                step,
                time: t,
                owner: owner.to_string(),
                task: k,
                value: b.value(x, t)?,
                initial: b.delta0,
            })
        })
        .collect()
}

impl LocalController {
    /// Epsilon for each followed edge with a live barrier.
    pub fn epsilons(
        &mut self,
        x: [f64; 2],
        leaders: &BTreeMap<u32, [f64; 2]>,
        t: f64,
    ) -> Result<Vec<(u32, f64)>, CbfError> {
        let mut out = Vec::new();
        for (&leader, schedule) in &mut self.follow {
            let xl = *leaders.get(&leader).ok_or(CbfError::MissingPeer { agent: self.id, peer: leader })?;
            let z = joint(xl, x);
            schedule.advance(&z, t)?;
            if let Some(eval) = schedule.evaluate(&z, t, self.params.kappa)? {
                out.push((leader, epsilon_single_integrator([eval.gradient[2], eval.gradient[3]], &self.input_box, self.gamma)));
            }
        }
        Ok(out)
    }

    /// Solves the local min-norm program. `partner` is the follower's state
    /// on the led edge and `epsilon` its message, if one arrived this step.
    pub fn control(
        &mut self,
        x: [f64; 2],
        partner: Option<[f64; 2]>,
        epsilon: Option<f64>,
        t: f64,
        step: u64,
    ) -> Result<LocalStep, CbfError> {
        let p = self.params;
        let mut rows = Vec::new();
        let mut recs = Vec::new();
        let mut barrier_min: Option<f64> = None;
        let mut degraded = false;
        if let Some(own) = &mut self.own {
            own.advance(&x, t)?;
            recs.extend(records(own, &x, t, step, &format!("self:{}", self.id))?);
            if let Some(eval) = own.evaluate(&x, t, p.kappa)? {
                barrier_min = Some(eval.value);
                rows.push(barrier_row(&eval, 0..2, 0.0, &p));
            }
        }
        if let Some(lead) = &mut self.lead {
            let xr = partner.ok_or(CbfError::MissingPeer { agent: self.id, peer: lead.follower })?;
            let z = joint(x, xr);
            lead.schedule.advance(&z, t)?;
            recs.extend(records(&lead.schedule, &z, t, step, &format!("edge:{}-{}", self.id, lead.follower))?);
            if let Some(eval) = lead.schedule.evaluate(&z, t, p.kappa)? {
                let eps = match epsilon {
                    Some(e) => e,
                    None => {
                        degraded = true;
                        epsilon_single_integrator([eval.gradient[2], eval.gradient[3]], &lead.follower_box, 1.0)
                    }
                };
                barrier_min = Some(barrier_min.map_or(eval.value, |m| m.min(eval.value)));
                rows.push(barrier_row(&eval, 0..2, eps, &p));
            }
        }
        let qp = solve_min_norm(&rows, &self.input_box.scaled(self.gamma));
        Ok(LocalStep { u: qp.u, qp, degraded, barrier_min, records: recs })
    }

    /// Proximity risk against neighbor positions, then the next shrinking
    /// factor.
    pub fn adapt_gamma(&mut self, x: [f64; 2], neighbors: &[[f64; 2]]) -> f64 {
        let d = neighbors.iter().map(|n| (n[0] - x[0]).hypot(n[1] - x[1])).fold(f64::INFINITY, f64::min);
        let risk = if d.is_finite() && self.params.d_safe > 0.0 { 1.0 - (d / self.params.d_safe).min(1.0) } else { 0.0 };
        self.gamma = update_gamma(risk, self.params.eta, self.params.gamma_min);
        risk
    }

    /// Agents sharing a task edge with this one.
    pub fn neighbors(&self) -> Vec<u32> {
        let mut n: Vec<u32> = self.follow.keys().copied().collect();
        n.extend(self.lead.as_ref().map(|l| l.follower));
        n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamStep {
    pub inputs: BTreeMap<u32, [f64; 2]>,
    /// `(follower, leader) -> epsilon` as sent.
    pub epsilons: BTreeMap<(u32, u32), f64>,
    pub degraded: BTreeSet<u32>,
    pub infeasible: BTreeSet<u32>,
    pub records: Vec<BarrierRecord>,
}

/// One synchronous step of the decentralized law for a whole team: every
/// follower computes and "sends" its epsilons, then every agent solves its
/// own program from its state, its edge partner's state and the epsilons
/// that arrived. `delivered(follower, leader)` models the links.
pub fn decentralized_step(
    team: &mut BTreeMap<u32, LocalController>,
    states: &BTreeMap<u32, [f64; 2]>,
    t: f64,
    step: u64,
    delivered: impl Fn(u32, u32) -> bool,
) -> Result<TeamStep, CbfError> {
    let state = |id: u32| states.get(&id).copied().ok_or(CbfError::MissingPeer { agent: id, peer: id });
    let mut epsilons = BTreeMap::new();
    for (&id, c) in team.iter_mut() {
        let leaders: BTreeMap<u32, [f64; 2]> =
            c.follow.keys().map(|&l| Ok((l, state(l)?))).collect::<Result<_, CbfError>>()?;
        for (leader, eps) in c.epsilons(state(id)?, &leaders, t)? {
            epsilons.insert((id, leader), eps);
        }
    }
    let mut out = TeamStep {
        inputs: BTreeMap::new(),
        epsilons: epsilons.clone(),
        degraded: BTreeSet::new(),
        infeasible: BTreeSet::new(),
        records: Vec::new(),
    };
    for (&id, c) in team.iter_mut() {
        let partner = c.lead.as_ref().map(|l| l.follower);
        let eps = partner.and_then(|r| epsilons.get(&(r, id)).copied().filter(|_| delivered(r, id)));
        let partner_state = partner.map(state).transpose()?;
        let s = c.control(state(id)?, partner_state, eps, t, step)?;
        if s.degraded {
            out.degraded.insert(id);
        }
        if !s.qp.feasible {
            out.infeasible.insert(id);
        }
        out.inputs.insert(id, s.u);
        out.records.extend(s.records);
    }
    Ok(out)
}
