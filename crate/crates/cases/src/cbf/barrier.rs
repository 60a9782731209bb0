use masim_core::logic::{Formula, Interval, Predicate};
use serde::{Deserialize, Serialize};

use super::CbfError;

/// Slack on window comparisons so `k * dt` rounding does not shift a sample
/// across a window edge.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalOp {
    Eventually,
    Always,
}

/// One `F[a,b] mu` or `G[a,b] mu` sub-task with a concave predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub op: TemporalOp,
    pub window: Interval,
    pub predicate: Predicate,
}

impl TaskSpec {
    /// Time by which the decay profile must reach zero.
    pub fn t_star(&self) -> f64 {
        match self.op {
            TemporalOp::Eventually => self.window.hi,
            TemporalOp::Always => self.window.lo,
        }
    }

    pub fn to_formula(&self) -> Formula {
        let p = Formula::pred(self.predicate.clone());
        match self.op {
            TemporalOp::Eventually => Formula::eventually(self.window, p),
            TemporalOp::Always => Formula::always(self.window, p),
        }
    }
}

/// Splits a top-level conjunction into barrier-compatible sub-tasks.
pub fn split_tasks(formula: &Formula) -> Result<Vec<TaskSpec>, CbfError> {
    fn go(f: &Formula, out: &mut Vec<TaskSpec>) -> Result<(), CbfError> {
        match f {
            Formula::And(a, b) => {
                go(a, out)?;
                go(b, out)
            }
            Formula::True => Ok(()),
            Formula::Eventually(w, inner) | Formula::Always(w, inner) => {
                let Formula::Pred(p) = inner.as_ref() else {
                    return Err(CbfError::UnsupportedTask(format!("'{inner}' is not a single predicate")));
                };
                if w.hi.is_infinite() {
                    return Err(CbfError::UnsupportedTask(format!("'{f}' needs a bounded window")));
                }
                let op = if matches!(f, Formula::Eventually(..)) { TemporalOp::Eventually } else { TemporalOp::Always };
                out.push(TaskSpec { op, window: *w, predicate: p.clone() });
                Ok(())
            }
            other => Err(CbfError::UnsupportedTask(format!("'{other}' is not F[a,b] mu or G[a,b] mu"))),
        }
    }
    let mut out = Vec::new();
    go(formula, &mut out)?;
    Ok(out)
}

/// Time-varying barrier `b(x, t) = mu(x) - gamma(t)` for one sub-task.
///
/// `gamma` is linear from `mu(x0) - delta0` at activation down to zero at
/// `t*`, then stays zero, so `b(x0, t0) = delta0` and `b >= 0` past `t*`
/// implies `mu >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub task: TaskSpec,
    pub t0: f64,
    pub t_star: f64,
    pub gamma0: f64,
    pub delta0: f64,
    /// Sampled-data margin.
    pub nu: f64,
    /// Slope of the linear class-K function.
    pub lambda: f64,
}

/// Builds the barrier of `task` from the state at activation time `t0`.
pub fn build_barrier(task: &TaskSpec, x0: &[f64], t0: f64, nu: f64, lambda: f64) -> Result<Barrier, CbfError> {
    if !(lambda > 0.0) || !(nu >= 0.0) {
        return Err(CbfError::Config(format!("need lambda > 0 and nu >= 0, got {lambda} and {nu}")));
    }
    let mu0 = task.predicate.value(x0)?;
    let t_star = task.t_star();
    if t0 > t_star + TIME_EPS {
        return Err(CbfError::LateActivation { t0, t_star });
    }
    let delta0 = (mu0.abs() / 2.0).min(1.0);
    let gamma0 = if t_star - t0 > TIME_EPS { mu0 - delta0 } else { 0.0 };
    Ok(Barrier { task: task.clone(), t0, t_star, gamma0, delta0, nu, lambda })
}

impl Barrier {
    pub fn gamma(&self, t: f64) -> f64 {
        if t >= self.t_star || self.t_star - self.t0 <= TIME_EPS {
            return 0.0;
        }
        let s = ((t - self.t0) / (self.t_star - self.t0)).clamp(0.0, 1.0);
        self.gamma0 * (1.0 - s)
    }

    /// `d gamma / dt`, taken from the right at the kink.
    pub fn gamma_dot(&self, t: f64) -> f64 {
        if t >= self.t_star || self.t_star - self.t0 <= TIME_EPS {
            0.0
        } else {
            -self.gamma0 / (self.t_star - self.t0)
        }
    }

    pub fn value(&self, x: &[f64], t: f64) -> Result<f64, CbfError> {
        Ok(self.task.predicate.value(x)? - self.gamma(t))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, CbfError> {
        Ok(self.task.predicate.gradient(x)?)
    }

    pub fn time_derivative(&self, t: f64) -> f64 {
        -self.gamma_dot(t)
    }

    /// Past the window end the barrier is retired.
    pub fn is_expired(&self, t: f64) -> bool {
        t > self.task.window.hi + TIME_EPS
    }
}

/// Value, state gradient and time derivative of one (possibly merged)
/// barrier at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub dt: f64,
}

/// Smooth minimum `-(1/kappa) ln sum exp(-kappa b_j)`; a lower bound on
/// the plain minimum. A single barrier is returned unchanged.
pub fn smooth_min(parts: &[BarrierEval], kappa: f64) -> Option<BarrierEval> {
    match parts {
        [] => None,
        [one] => Some(one.clone()),
        _ => {
            let m = parts.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = parts.iter().map(|p| (-kappa * (p.value - m)).exp()).collect();
            let total: f64 = w.iter().sum();
            let dim = parts.iter().map(|p| p.gradient.len()).max().unwrap_or(0);
            let mut gradient = vec![0.0; dim];
            let mut dt = 0.0;
            for (p, wi) in parts.iter().zip(&w) {
                for (g, v) in gradient.iter_mut().zip(&p.gradient) {
                    *g += wi / total * v;
                }
                dt += wi / total * p.dt;
            }
            Some(BarrierEval { value: m - total.ln() / kappa, gradient, dt })
        }
    }
}

/// Lazily activated sequence of sub-tasks on one state vector.
///
/// A sub-task becomes active once every other sub-task whose window ends
/// no later than its own window opens has closed; its barrier is built from
/// the state at that sample. Sub-tasks overlapping in time are active
/// together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSchedule {
    tasks: Vec<TaskSpec>,
    barriers: Vec<Option<Barrier>>,
    nu: f64,
    lambda: f64,
}

impl TaskSchedule {
    pub fn new(tasks: Vec<TaskSpec>, nu: f64, lambda: f64) -> Result<Self, CbfError> {
        let s = Self { barriers: vec![None; tasks.len()], tasks, nu, lambda };
        for k in 0..s.tasks.len() {
            let act = s.activation_time(k);
            if act >= s.tasks[k].t_star() - TIME_EPS && act > 0.0 {
                return Err(CbfError::Config(format!(
                    "sub-task {} activates at t = {act} but must be reached by t = {}",
                    k,
                    s.tasks[k].t_star()
                )));
            }
        }
        Ok(s)
    }

    pub fn from_formula(formula: &Formula, nu: f64, lambda: f64) -> Result<Self, CbfError> {
        Self::new(split_tasks(formula)?, nu, lambda)
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    /// Earliest time sub-task `k` may be activated.
    pub fn activation_time(&self, k: usize) -> f64 {
        let start = self.tasks[k].window.lo;
        self.tasks
            .iter()
            .enumerate()
            .filter(|(j, t)| *j != k && t.window.hi <= start)
            .map(|(_, t)| t.window.hi)
            .fold(0.0, f64::max)
    }

    fn should_activate(&self, k: usize, t: f64) -> bool {
        let act = self.activation_time(k);
        if act == 0.0 {
            t >= -TIME_EPS
        } else {
            t > act + TIME_EPS
        }
    }

    /// Activates due sub-tasks at state `x`, time `t`; returns indices of
    /// the barriers live at `t`.
    pub fn advance(&mut self, x: &[f64], t: f64) -> Result<Vec<usize>, CbfError> {
        let mut live = Vec::new();
        for k in 0..self.tasks.len() {
            if self.barriers[k].is_none() && self.should_activate(k, t) && t <= self.tasks[k].window.hi + TIME_EPS {
                self.barriers[k] = Some(build_barrier(&self.tasks[k], x, t, self.nu, self.lambda)?);
            }
            if let Some(b) = &self.barriers[k] {
                if !b.is_expired(t) {
                    live.push(k);
                }
            }
        }
        Ok(live)
    }

    /// Sub-tasks live at `t` without activating anything.
    pub fn live(&self, t: f64) -> Vec<usize> {
        (0..self.tasks.len())
            .filter(|&k| self.barriers[k].as_ref().is_some_and(|b| !b.is_expired(t)))
            .collect()
    }

    pub fn barrier(&self, k: usize) -> Option<&Barrier> {
        self.barriers.get(k).and_then(Option::as_ref)
    }

    /// Merged barrier over the live sub-tasks.
    pub fn evaluate(&self, x: &[f64], t: f64, kappa: f64) -> Result<Option<BarrierEval>, CbfError> {
        let parts = self
            .live(t)
            .into_iter()
            .map(|k| {
                let b = self.barriers[k].as_ref().expect("live barrier");
                Ok(BarrierEval { value: b.value(x, t)?, gradient: b.gradient(x)?, dt: b.time_derivative(t) })
            })
            .collect::<Result<Vec<_>, CbfError>>()?;
        Ok(smooth_min(&parts, kappa))
    }
}

/// `L_b * dt * max_speed`: bound on how much a barrier with Lipschitz
/// constant `L_b` can drop between samples.
pub fn lipschitz_margin(l_b: f64, dt: f64, max_speed: f64) -> f64 {
    l_b * dt * max_speed
}

#[cfg(test)]
mod tests {
    use super::*;
    use masim_core::logic::parse;

    fn task(text: &str) -> TaskSpec {
        split_tasks(&parse(text).unwrap()).unwrap().remove(0)
    }

    #[test]
    fn eventually_on_boundary_reaches_predicate() {
        let t = task("F[0,10] norm(x1 - 3, x2) <= 1");
        let b = build_barrier(&t, &[2.0, 0.0], 0.0, 0.0, 1.0).unwrap();
        assert_eq!(b.delta0, 0.0);
        let x = [2.5, 0.4];
        let mu = 1.0 - (0.25f64 + 0.16).sqrt();
        assert!((b.value(&x, 10.0).unwrap() - mu).abs() < 1e-12);
    }

    #[test]
    fn always_with_margin_two() {
        let t = task("G[5,9] x1 + 2 >= 0");
        let b = build_barrier(&t, &[0.0], 0.0, 0.0, 1.0).unwrap();
        assert_eq!(b.delta0, 1.0);
        assert_eq!(b.gamma(0.0), 1.0);
        assert_eq!(b.value(&[0.0], 0.0).unwrap(), 1.0);
        assert_eq!(b.gamma(5.0), 0.0);
    }

    #[test]
    fn equality_forever_is_zero() {
        let t = task("G[0,4] x1 >= 0");
        let b = build_barrier(&t, &[0.0], 0.0, 0.0, 1.0).unwrap();
        for k in 0..5 {
            assert_eq!(b.value(&[0.0], k as f64).unwrap(), 0.0);
        }
    }

    #[test]
    fn non_concave_tasks_rejected() {
        for text in ["F[0,1] !(x1 >= 0)", "F[0,1] (x1 >= 0 | x2 >= 0)", "x1 >= 0 U[0,2] x2 >= 0", "F x1 >= 0"] {
            assert!(split_tasks(&parse(text).unwrap()).is_err(), "{text}");
        }
    }

    #[test]
    fn schedule_activates_lazily() {
        let f = parse("F[10,20] x1 >= 0 & F[35,45] x1 - 5 >= 0").unwrap();
        let mut s = TaskSchedule::from_formula(&f, 0.0, 1.0).unwrap();
        assert_eq!(s.advance(&[-3.0], 0.0).unwrap(), vec![0]);
        assert_eq!(s.advance(&[0.5], 20.0).unwrap(), vec![0]);
        assert_eq!(s.advance(&[0.5], 20.1).unwrap(), vec![1]);
        assert_eq!(s.barrier(1).unwrap().t0, 20.1);
        assert!(s.advance(&[0.5], 45.2).unwrap().is_empty());
    }

    #[test]
    fn smooth_min_bounds_the_minimum() {
        let parts = [
            BarrierEval { value: 0.3, gradient: vec![1.0, 0.0], dt: 0.0 },
            BarrierEval { value: 0.5, gradient: vec![0.0, 1.0], dt: 1.0 },
        ];
        let m = smooth_min(&parts, 10.0).unwrap();
        assert!(m.value <= 0.3 && m.value > 0.3 - 2f64.ln() / 10.0);
        assert!(m.gradient[0] > m.gradient[1]);
    }
}
