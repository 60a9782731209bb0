//! Sampled STL robustness.
//!
//! Robustness is evaluated on trace samples only (no interpolation). Every
//! node is computed for all sample indices at once; `None` marks indices whose
//! value depends on samples past the end of the trace. Unbounded operators
//! range to the end of the trace and are always defined.

use super::formula::{Formula, Interval};
use super::LogicError;

/// Time tolerance when matching window bounds against sample times.
const TIME_EPS: f64 = 1e-9;

/// Sampled signal: strictly increasing times with one state vector each.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self, LogicError> {
        if times.is_empty() || times.len() != states.len() {
            return Err(LogicError::Empty);
        }
        if let Some(i) = (1..times.len()).find(|&i| !(times[i] > times[i - 1])) {
            return Err(LogicError::NonIncreasingTimes(i));
        }
        Ok(Self { times, states })
    }

    /// Samples at `t0, t0 + dt, ...`.
    pub fn uniform(t0: f64, dt: f64, states: Vec<Vec<f64>>) -> Result<Self, LogicError> {
        let times = (0..states.len()).map(|k| t0 + dt * k as f64).collect();
        Self::new(times, states)
    }

    /// One-dimensional signal at unit steps from zero.
    pub fn scalar(values: &[f64]) -> Result<Self, LogicError> {
        Self::uniform(0.0, 1.0, values.iter().map(|v| vec![*v]).collect())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("non-empty by construction")
    }

    /// Index of the sample at time `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t - TIME_EPS);
        (i < self.times.len() && (self.times[i] - t).abs() <= TIME_EPS).then_some(i)
    }

    /// Sample indices `j >= i` with `t_j - t_i` inside `iv`, plus whether the
    /// trace reaches the window's upper end.
    fn window(&self, i: usize, iv: &Interval) -> (std::ops::Range<usize>, bool) {
        let t = self.times[i];
        let lo = t + iv.lo - TIME_EPS;
        let start = i + self.times[i..].partition_point(|&s| s < lo);
        if iv.hi.is_infinite() {
            return (start..self.len(), true);
        }
        let hi = t + iv.hi + TIME_EPS;
        let end = i + self.times[i..].partition_point(|&s| s <= hi);
        let covered = self.end_time() >= t + iv.hi - TIME_EPS;
        (start..end.max(start), covered)
    }
}

/// Robustness of `formula` at sample time `t`.
pub fn stl_robustness(trace: &Trace, formula: &Formula, t: f64) -> Result<f64, LogicError> {
    let index = trace.index_of(t).ok_or(LogicError::NotSampleTime(t))?;
    stl_robustness_at(trace, formula, index)
}

/// Robustness of `formula` at sample `index`.
pub fn stl_robustness_at(trace: &Trace, formula: &Formula, index: usize) -> Result<f64, LogicError> {
    if index >= trace.len() {
        return Err(LogicError::IndexOutOfRange { index, len: trace.len() });
    }
    stl_robustness_vector(trace, formula)?[index].ok_or_else(|| LogicError::InsufficientTrace {
        needed: trace.times[index] + horizon(formula),
        trace_end: trace.end_time(),
    })
}

/// Robustness at every sample; `None` where the trace is too short.
pub fn stl_robustness_vector(trace: &Trace, formula: &Formula) -> Result<Vec<Option<f64>>, LogicError> {
    let n = trace.len();
    Ok(match formula {
        Formula::True => vec![Some(f64::INFINITY); n],
        Formula::False => vec![Some(f64::NEG_INFINITY); n],
        Formula::Atom(a) => return Err(LogicError::AtomInStl(a.clone())),
        Formula::Pred(p) => trace.states.iter().map(|x| p.value(x).map(Some)).collect::<Result<_, _>>()?,
        Formula::Not(f) => stl_robustness_vector(trace, f)?.into_iter().map(|r| r.map(|v| -v)).collect(),
        Formula::And(a, b) => zip_with(stl_robustness_vector(trace, a)?, stl_robustness_vector(trace, b)?, f64::min),
        Formula::Or(a, b) => zip_with(stl_robustness_vector(trace, a)?, stl_robustness_vector(trace, b)?, f64::max),
        Formula::Next(f) => {
            let inner = stl_robustness_vector(trace, f)?;
            (0..n).map(|i| if i + 1 < n { inner[i + 1] } else { None }).collect()
        }
        Formula::Eventually(iv, f) => {
            let inner = stl_robustness_vector(trace, f)?;
            (0..n).map(|i| fold_window(trace, &inner, i, iv, f64::NEG_INFINITY, f64::max)).collect()
        }
        Formula::Always(iv, f) => {
            let inner = stl_robustness_vector(trace, f)?;
            (0..n).map(|i| fold_window(trace, &inner, i, iv, f64::INFINITY, f64::min)).collect()
        }
        Formula::Until(a, b) => {
            until(trace, &stl_robustness_vector(trace, a)?, &stl_robustness_vector(trace, b)?, &Interval::unbounded())
        }
        Formula::TimedUntil(iv, a, b) => {
            until(trace, &stl_robustness_vector(trace, a)?, &stl_robustness_vector(trace, b)?, iv)
        }
    })
}

fn zip_with(a: Vec<Option<f64>>, b: Vec<Option<f64>>, op: fn(f64, f64) -> f64) -> Vec<Option<f64>> {
    a.into_iter().zip(b).map(|(x, y)| Some(op(x?, y?))).collect()
}

fn fold_window(
    trace: &Trace,
    inner: &[Option<f64>],
    i: usize,
    iv: &Interval,
    init: f64,
    op: fn(f64, f64) -> f64,
) -> Option<f64> {
    let (range, covered) = trace.window(i, iv);
    if !covered {
        return None;
    }
    range.map(|j| inner[j]).try_fold(init, |acc, v| Some(op(acc, v?)))
}

/// `max_{j in window} min(rho_b(j), min_{i <= m < j} rho_a(m))`.
fn until(trace: &Trace, a: &[Option<f64>], b: &[Option<f64>], iv: &Interval) -> Vec<Option<f64>> {
    (0..trace.len())
        .map(|i| {
            let (range, covered) = trace.window(i, iv);
            if !covered {
                return None;
            }
            let mut prefix = f64::INFINITY;
            let mut best = f64::NEG_INFINITY;
            for m in i..range.end {
                if m >= range.start {
                    best = best.max(b[m]?.min(prefix));
                }
                if m + 1 < range.end {
                    prefix = prefix.min(a[m]?);
                }
            }
            Some(best)
        })
        .collect()
}

/// Time span past `t` that a formula needs to be evaluated. Unbounded
/// operators contribute nothing since they clip to the trace.
fn horizon(f: &Formula) -> f64 {
    let bounded = |iv: &Interval| if iv.hi.is_finite() { iv.hi } else { 0.0 };
    match f {
        Formula::True | Formula::False | Formula::Atom(_) | Formula::Pred(_) => 0.0,
        Formula::Not(x) => horizon(x),
        Formula::Next(x) => horizon(x),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => horizon(a).max(horizon(b)),
        Formula::Always(iv, x) | Formula::Eventually(iv, x) => bounded(iv) + horizon(x),
        Formula::TimedUntil(iv, a, b) => bounded(iv) + horizon(a).max(horizon(b)),
    }
}
