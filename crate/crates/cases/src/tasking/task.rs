use masim_core::env::Rect;
use masim_core::logic::{AffineExpr, Formula, Interval, Predicate};
use serde::{Deserialize, Serialize};

use super::map::WarehouseMap;
use super::TaskingError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    /// Visit `origin`, then `destination`.
    Fetch { origin: String, destination: String },
    /// Reach `destination`.
    Home { destination: String },
}

impl TaskKind {
    pub fn origin(&self) -> Option<&str> {
        match self {
            TaskKind::Fetch { origin, .. } => Some(origin),
            TaskKind::Home { .. } => None,
        }
    }

    pub fn destination(&self) -> &str {
        match self {
            TaskKind::Fetch { destination, .. } | TaskKind::Home { destination } => destination,
        }
    }

    pub fn is_fetch(&self) -> bool {
        matches!(self, TaskKind::Fetch { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "agent", rename_all = "snake_case")]
pub enum TaskStatus {
    Open,
    Assigned(u32),
    Done(u32),
    Failed(u32),
}

impl TaskStatus {
    /// Allowed moves: open to assigned, assigned to done or failed.
    pub fn can_become(&self, next: &TaskStatus) -> bool {
        matches!(
            (self, next),
            (TaskStatus::Open, TaskStatus::Assigned(_))
                | (TaskStatus::Assigned(_), TaskStatus::Done(_))
                | (TaskStatus::Assigned(_), TaskStatus::Failed(_))
        ) && match (self, next) {
            (TaskStatus::Assigned(a), TaskStatus::Done(b) | TaskStatus::Failed(b)) => a == b,
            _ => true,
        }
    }
}

/// Task as announced: deadline counts steps from the issue step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchTask {
    pub id: u64,
    #[serde(flatten)]
    pub kind: TaskKind,
    pub issue_step: u64,
    pub deadline: u64,
}

impl FetchTask {
    /// Last state index at which completion still meets the deadline.
    pub fn due_step(&self) -> u64 {
        self.issue_step + self.deadline
    }
}

/// `x in r` as a conjunction of four half-planes over `x1, x2`.
pub fn in_rect(r: &Rect) -> Formula {
    let half = |coeffs: Vec<f64>, c: f64| Formula::pred(Predicate::Affine(AffineExpr::new(coeffs, c)));
    Formula::conjunction([
        half(vec![1.0], -r.min[0]),
        half(vec![-1.0], r.max[0]),
        half(vec![0.0, 1.0], -r.min[1]),
        half(vec![0.0, -1.0], r.max[1]),
    ])
}

fn at(k: u64, f: Formula) -> Formula {
    Formula::eventually(Interval { lo: k as f64, hi: k as f64 }, f)
}

/// Reach `origin` (unless already visited) and then `destination` within
/// `remaining` steps, as seen from the current sample:
/// `OR_k F[k,k](in_origin & F[0, remaining-k] in_dest)`.
pub fn leg_formula(origin: Option<&Rect>, destination: &Rect, remaining: i64) -> Formula {
    if remaining < 0 {
        return Formula::False;
    }
    let r = remaining as u64;
    let dest = |window: u64| Formula::eventually(Interval { lo: 0.0, hi: window as f64 }, in_rect(destination));
    match origin {
        None => dest(r),
        Some(o) => Formula::disjunction((0..=r).map(|k| at(k, Formula::and(in_rect(o), dest(r - k))))),
    }
}

/// Formula of a freshly issued task over its own deadline, together with
/// staying inside the warehouse for the whole window.
pub fn task_to_formula(task: &FetchTask, map: &WarehouseMap) -> Result<Formula, TaskingError> {
    let origin = task.kind.origin().map(|o| map.region(o)).transpose()?;
    let dest = map.region(task.kind.destination())?;
    let stay = Formula::always(Interval { lo: 0.0, hi: task.deadline as f64 }, in_rect(&map.bounds.rect()));
    Ok(Formula::and(leg_formula(origin.as_ref(), &dest, task.deadline as i64), stay))
}

#[cfg(test)]
mod tests {
    use super::*;
    use masim_core::logic::{stl_robustness_at, Trace};

    #[test]
    fn leg_formula_orders_visits() {
        let o = Rect::new([0.0, 0.0], [1.0, 1.0]);
        let d = Rect::new([4.0, 0.0], [5.0, 1.0]);
        let f = leg_formula(Some(&o), &d, 4);
        let ok = Trace::uniform(0.0, 1.0, vec![vec![0.5, 0.5], vec![2.0, 0.5], vec![4.5, 0.5], vec![4.5, 0.5], vec![4.5, 0.5]]).unwrap();
        assert!(stl_robustness_at(&ok, &f, 0).unwrap() >= 0.0);
        let reversed = Trace::uniform(0.0, 1.0, vec![vec![4.5, 0.5], vec![2.0, 0.5], vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(stl_robustness_at(&reversed, &f, 0).unwrap() < 0.0);
    }

    #[test]
    fn status_machine() {
        assert!(TaskStatus::Open.can_become(&TaskStatus::Assigned(2)));
        assert!(TaskStatus::Assigned(2).can_become(&TaskStatus::Done(2)));
        assert!(!TaskStatus::Assigned(2).can_become(&TaskStatus::Done(3)));
        assert!(!TaskStatus::Open.can_become(&TaskStatus::Done(2)));
        assert!(!TaskStatus::Done(1).can_become(&TaskStatus::Failed(1)));
    }
}
