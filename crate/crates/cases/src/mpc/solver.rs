//! Sampling-based solver for the scenario-tree program.
//!
//! Candidates are ownship input sequences. The pool holds a move-blocked
//! lattice, the shifted previous solution and cross-entropy refinements; each
//! candidate is rolled out against every intruder scenario and the one with
//! the lowest penalized cost wins. The cross-entropy steps are steered by a
//! fixed guide clearance rather than by `rho`, so the pool itself does not
//! depend on `rho` and a larger `rho` can only shrink the feasible subset.

use masim_core::env::{step_unicycle, wrap_angle, InputBound};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dubins::DubinsIntent;
use super::tree::ScenarioTree;
use super::MpcError;
use crate::Issue;

/// Weight of constraint violation in the penalized cost.
const PENALTY: f64 = 1e6;

pub type Matrix3 = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Move-blocking pattern of the lattice; empty picks `[1, (N-1)/2, rest]`.
    #[serde(default)]
    pub blocks: Vec<usize>,
    #[serde(default = "default_turn_levels")]
    pub turn_levels: usize,
    #[serde(default = "default_speed_levels")]
    pub speed_levels: usize,
    #[serde(default = "default_cem_iterations")]
    pub cem_iterations: usize,
    #[serde(default = "default_cem_samples")]
    pub cem_samples: usize,
    #[serde(default = "default_cem_elites")]
    pub cem_elites: usize,
    /// Clearance the cross-entropy steps aim for; defaults to `rho`.
    #[serde(default)]
    pub guide_clearance: Option<f64>,
}

fn default_turn_levels() -> usize {
    5
}
fn default_speed_levels() -> usize {
    3
}
fn default_cem_iterations() -> usize {
    4
}
fn default_cem_samples() -> usize {
    96
}
fn default_cem_elites() -> usize {
    8
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            blocks: Vec::new(),
            turn_levels: default_turn_levels(),
            speed_levels: default_speed_levels(),
            cem_iterations: default_cem_iterations(),
            cem_samples: default_cem_samples(),
            cem_elites: default_cem_elites(),
            guide_clearance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon `N`.
    pub horizon: usize,
    /// Robust horizon `N_r < N`.
    pub robust_horizon: usize,
    pub q: Matrix3,
    pub q_f: Matrix3,
    /// Scalar weight inside the separation metric.
    pub r: f64,
    /// Minimum separation.
    pub rho: f64,
    /// Sampling time.
    pub te: f64,
    pub ownship_turn: InputBound,
    pub ownship_speed: InputBound,
    pub intruder_turn: InputBound,
    pub intruder_speed: f64,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn is_positive_definite(m: &Matrix3) -> bool {
    let symmetric = (0..3).all(|i| (0..3).all(|j| (m[i][j] - m[j][i]).abs() <= 1e-12 * (1.0 + m[i][j].abs())));
    let d1 = m[0][0];
    let d2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let d3 = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    symmetric && d1 > 0.0 && d2 > 0.0 && d3 > 0.0
}

impl MpcConfig {
    pub fn validate(&self, path: &str) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut check = |ok: bool, field: &str, msg: String| {
            if !ok {
                issues.push(Issue::new(format!("{path}.{field}"), msg));
            }
        };
        check(self.horizon > 0, "horizon", "horizon N must be positive".into());
        check(
            self.robust_horizon < self.horizon,
            "robust_horizon",
            format!("robust horizon N_r = {} must be smaller than N = {}", self.robust_horizon, self.horizon),
        );
        check(self.robust_horizon <= 6, "robust_horizon", "robust horizon above 6 gives more than 729 scenarios".into());
        check(is_positive_definite(&self.q), "q", "Q must be symmetric positive definite".into());
        check(is_positive_definite(&self.q_f), "q_f", "Q_f must be symmetric positive definite".into());
        check(self.r > 0.0, "r", format!("R must be positive, got {}", self.r));
        check(self.rho > 0.0, "rho", format!("rho must be positive, got {}", self.rho));
        check(self.te > 0.0, "te", "sampling time must be positive".into());
        for (name, b) in [("ownship_turn", self.ownship_turn), ("ownship_speed", self.ownship_speed), ("intruder_turn", self.intruder_turn)] {
            check(b.lo <= b.hi, name, format!("lower bound {} exceeds upper bound {}", b.lo, b.hi));
        }
        check(self.intruder_speed > 0.0, "intruder_speed", "intruder speed must be positive".into());
        let s = &self.solver;
        check(s.turn_levels >= 2 && s.speed_levels >= 1, "solver", "need at least 2 turn levels and 1 speed level".into());
        check(s.cem_elites >= 1 && s.cem_elites <= s.cem_samples.max(1), "solver.cem_elites", "elites must be in 1..=samples".into());
        if !s.blocks.is_empty() {
            check(
                s.blocks.iter().sum::<usize>() == self.horizon && s.blocks.iter().all(|b| *b > 0),
                "solver.blocks",
                "blocks must be positive and sum to N".into(),
            );
        }
        issues
    }

    fn blocks(&self) -> Vec<usize> {
        if !self.solver.blocks.is_empty() {
            return self.solver.blocks.clone();
        }
        let n = self.horizon;
        let second = (n - 1) / 2;
        [1, second, n - 1 - second].into_iter().filter(|b| *b > 0).collect()
    }
}

/// `sqrt(e' M e)`; the heading component of `e` is wrapped first.
pub fn weighted_norm(error: [f64; 3], m: &Matrix3) -> f64 {
    let e = [error[0], error[1], wrap_angle(error[2])];
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            acc += e[i] * m[i][j] * e[j];
        }
    }
    acc.max(0.0).sqrt()
}

/// Horizontal separation `sqrt(R ((x1 - x2)^2 + (y1 - y2)^2))`; headings
/// are ignored.
pub fn separation(a: [f64; 3], b: [f64; 3], r: f64) -> f64 {
    (r * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))).sqrt()
}

/// `||s_N - s_T||_Qf + ||s_0 - s_T||_Q + sum_{k=1}^{N-1} ||s_k - s_T||_Q`.
pub fn scenario_cost(traj: &[[f64; 3]], target: [f64; 3], q: &Matrix3, q_f: &Matrix3, horizon: usize) -> Result<f64, MpcError> {
    if traj.len() != horizon + 1 || horizon == 0 {
        return Err(MpcError::DimensionMismatch { expected: horizon + 1, got: traj.len() });
    }
    let err = |s: [f64; 3]| [s[0] - target[0], s[1] - target[1], s[2] - target[2]];
    let stages: f64 = traj[..horizon].iter().map(|s| weighted_norm(err(*s), q)).sum();
    Ok(weighted_norm(err(traj[horizon]), q_f) + stages)
}

/// Intruder as seen by the ownship.
#[derive(Debug, Clone, Copy)]
pub struct IntruderView<'a> {
    pub state: [f64; 3],
    pub intent: &'a DubinsIntent,
    /// Scenarios hold position once within this distance of the target.
    pub arrival_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct MpcProblem<'a> {
    pub config: &'a MpcConfig,
    pub ownship: [f64; 3],
    pub target: [f64; 3],
    pub intruder: Option<IntruderView<'a>>,
    /// Absolute time `t` of the current sample.
    pub time: f64,
    /// Previous solution as `(turn, speed)` pairs.
    pub warm_start: Option<&'a [(f64, f64)]>,
    pub seed: u64,
    /// `false` drops the separation constraint.
    pub enforce_separation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    /// 1-based scenario index.
    pub scenario: usize,
    pub step: usize,
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    pub turn: Vec<f64>,
    pub speed: Vec<f64>,
    pub cost: f64,
    pub predicted: Vec<[f64; 3]>,
    pub intruder_scenarios: Vec<Vec<[f64; 3]>>,
    /// Smallest predicted separation over scenarios and constrained stages.
    pub min_separation: Option<f64>,
    /// Worst violation of the separation constraint, if any.
    pub violation: Option<ConstraintViolation>,
    pub candidates: usize,
}

impl MpcSolution {
    pub fn inputs(&self) -> Vec<(f64, f64)> {
        self.turn.iter().copied().zip(self.speed.iter().copied()).collect()
    }
}

type Candidate = Vec<(f64, f64)>;

struct Eval {
    cost: f64,
    violation: f64,
    guide: f64,
}

struct Context<'a> {
    problem: &'a MpcProblem<'a>,
    scenarios: Vec<Vec<[f64; 3]>>,
    guide_clearance: f64,
}

impl Context<'_> {
    fn rollout(&self, cand: &Candidate) -> Vec<[f64; 3]> {
        let te = self.problem.config.te;
        let mut s = self.problem.ownship;
        let mut out = Vec::with_capacity(cand.len() + 1);
        out.push(s);
        for &(u, v) in cand {
            s = step_unicycle(s, v, u, te);
            out.push(s);
        }
        out
    }

    fn evaluate(&self, cand: &Candidate) -> Eval {
        let cfg = self.problem.config;
        let traj = self.rollout(cand);
        let cost = scenario_cost(&traj, self.problem.target, &cfg.q, &cfg.q_f, cfg.horizon).expect("rollout has N+1 states");
        let mut violation = 0.0;
        let mut guide = 0.0;
        for sc in &self.scenarios {
            for k in 0..cfg.horizon {
                let d = separation(traj[k], sc[k], cfg.r);
                violation += (cfg.rho - d).max(0.0);
                guide += (self.guide_clearance - d).max(0.0);
            }
        }
        if !self.problem.enforce_separation {
            violation = 0.0;
        }
        Eval { cost, violation, guide: cost + PENALTY * guide }
    }

    fn penalized(e: &Eval) -> f64 {
        e.cost + PENALTY * e.violation
    }
}

fn levels(b: InputBound, n: usize) -> Vec<f64> {
    if n <= 1 || b.lo == b.hi {
        return vec![b.hi];
    }
    (0..n).map(|i| b.lo + (b.hi - b.lo) * i as f64 / (n - 1) as f64).collect()
}

fn lattice(cfg: &MpcConfig) -> Vec<Candidate> {
    let moves: Vec<(f64, f64)> = levels(cfg.ownship_turn, cfg.solver.turn_levels)
        .into_iter()
        .flat_map(|u| levels(cfg.ownship_speed, cfg.solver.speed_levels).into_iter().map(move |v| (u, v)))
        .collect();
    let mut out: Vec<Candidate> = vec![Vec::new()];
    for block in cfg.blocks() {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                moves.iter().map(move |m| {
                    let mut c = prefix.clone();
                    c.extend(std::iter::repeat_n(*m, block));
                    c
                })
            })
            .collect();
    }
    out
}

fn argmin_by(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("non-empty pool")
}

/// Solves the scenario-tree program at one sample.
///
/// Returns [`MpcError::Infeasible`] carrying the best-effort solution when no
/// candidate keeps every scenario at separation `>= rho`.
pub fn solve_mpc(problem: &MpcProblem<'_>) -> Result<MpcSolution, MpcError> {
    let cfg = problem.config;
    let issues = cfg.validate("mpc");
    if let Some(issue) = issues.first() {
        return Err(MpcError::Config(issue.to_string()));
    }
    let tree = ScenarioTree::new(cfg.robust_horizon);
    let scenarios = match &problem.intruder {
        Some(view) => {
            tree.predict(view.state, view.arrival_tolerance, view.intent, cfg.intruder_turn, problem.time, cfg.horizon)
        }
        None => Vec::new(),
    };
    let ctx = Context { problem, scenarios, guide_clearance: cfg.solver.guide_clearance.unwrap_or(cfg.rho) };

    let mut pool = lattice(cfg);
    if let Some(prev) = problem.warm_start {
        if !prev.is_empty() {
            let mut shifted: Candidate = prev.iter().skip(1).copied().collect();
            let last = *prev.last().expect("non-empty");
            shifted.resize(cfg.horizon, last);
            pool.push(shifted.into_iter().map(|(u, v)| (cfg.ownship_turn.clamp(u), cfg.ownship_speed.clamp(v))).collect());
        }
    }
    let mut evals: Vec<Eval> = pool.par_iter().map(|c| ctx.evaluate(c)).collect();

    // Cross-entropy refinement around the best candidate by guide score.
    let guides: Vec<f64> = evals.iter().map(|e| e.guide).collect();
    let mut mean = pool[argmin_by(&guides)].clone();
    let mut std: Vec<(f64, f64)> =
        vec![((cfg.ownship_turn.hi - cfg.ownship_turn.lo) / 4.0, (cfg.ownship_speed.hi - cfg.ownship_speed.lo) / 4.0); cfg.horizon];
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    let s = &cfg.solver;
    for _ in 0..s.cem_iterations {
        let samples: Vec<Candidate> = (0..s.cem_samples)
            .map(|_| {
                mean.iter()
                    .zip(&std)
                    .map(|(&(mu, mv), &(su, sv))| {
                        let zu: f64 = StandardNormal.sample(&mut rng);
                        let zv: f64 = StandardNormal.sample(&mut rng);
                        (cfg.ownship_turn.clamp(mu + su * zu), cfg.ownship_speed.clamp(mv + sv * zv))
                    })
                    .collect()
            })
            .collect();
        let sample_evals: Vec<Eval> = samples.par_iter().map(|c| ctx.evaluate(c)).collect();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| sample_evals[a].guide.total_cmp(&sample_evals[b].guide).then(a.cmp(&b)));
        let elites: Vec<&Candidate> = order.iter().take(s.cem_elites).map(|&i| &samples[i]).collect();
        if !elites.is_empty() {
            let n = elites.len() as f64;
            for k in 0..cfg.horizon {
                let mu = elites.iter().map(|c| c[k].0).sum::<f64>() / n;
                let mv = elites.iter().map(|c| c[k].1).sum::<f64>() / n;
                let su = (elites.iter().map(|c| (c[k].0 - mu).powi(2)).sum::<f64>() / n).sqrt();
                let sv = (elites.iter().map(|c| (c[k].1 - mv).powi(2)).sum::<f64>() / n).sqrt();
                mean[k] = (mu, mv);
                std[k] = (su.max(1e-3), sv.max(1e-3));
            }
        }
        pool.extend(samples);
        evals.extend(sample_evals);
    }
    pool.push(mean.clone());
    evals.push(ctx.evaluate(&mean));

    let penalized: Vec<f64> = evals.iter().map(Context::penalized).collect();
    let best = argmin_by(&penalized);
    let cand = &pool[best];
    let predicted = ctx.rollout(cand);
    let mut min_sep: Option<f64> = None;
    let mut worst: Option<ConstraintViolation> = None;
    for (j, sc) in ctx.scenarios.iter().enumerate() {
        for k in 0..cfg.horizon {
            let d = separation(predicted[k], sc[k], cfg.r);
            min_sep = Some(min_sep.map_or(d, |m| m.min(d)));
            if problem.enforce_separation && d < cfg.rho && worst.as_ref().is_none_or(|w| d < w.separation) {
                worst = Some(ConstraintViolation { scenario: j + 1, step: k, separation: d });
            }
        }
    }
    let solution = MpcSolution {
        turn: cand.iter().map(|c| c.0).collect(),
        speed: cand.iter().map(|c| c.1).collect(),
        cost: evals[best].cost,
        predicted,
        intruder_scenarios: ctx.scenarios,
        min_separation: min_sep,
        violation: worst.clone(),
        candidates: pool.len(),
    };
    match worst {
        Some(v) => Err(MpcError::Infeasible { violation: v, best: Box::new(solution) }),
        None => Ok(solution),
    }
}
