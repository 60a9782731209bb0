//! Minimum-norm point of a 2D box cut by at most a few half-planes, by
//! enumerating active sets in closed form.

use serde::{Deserialize, Serialize};

/// Feasibility slack on constraint checks.
const FEAS_TOL: f64 = 1e-9;

/// Half-plane `a . u >= beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub a: [f64; 2],
    pub beta: f64,
}

impl LinearConstraint {
    pub fn new(a: [f64; 2], beta: f64) -> Self {
        Self { a, beta }
    }

    /// Amount by which `u` misses the constraint, zero when satisfied.
    pub fn violation(&self, u: [f64; 2]) -> f64 {
        (self.beta - self.a[0] * u[0] - self.a[1] * u[1]).max(0.0)
    }
}

/// Axis-aligned input box `lo <= u <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl InputBox {
    pub fn symmetric(limit: f64) -> Self {
        Self { lo: [-limit; 2], hi: [limit; 2] }
    }

    pub fn scaled(&self, gamma: f64) -> Self {
        Self { lo: self.lo.map(|v| v * gamma), hi: self.hi.map(|v| v * gamma) }
    }

    pub fn contains(&self, u: [f64; 2]) -> bool {
        (0..2).all(|i| u[i] >= self.lo[i] - FEAS_TOL && u[i] <= self.hi[i] + FEAS_TOL)
    }

    fn clamp(&self, u: [f64; 2]) -> [f64; 2] {
        [u[0].clamp(self.lo[0], self.hi[0]), u[1].clamp(self.lo[1], self.hi[1])]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub u: [f64; 2],
    pub feasible: bool,
    /// Per-constraint violation at `u`; all zero when feasible.
    pub violations: Vec<f64>,
}

/// Lines `a . u = beta` of the constraints and the box faces.
fn lines(constraints: &[LinearConstraint], bx: &InputBox) -> Vec<([f64; 2], f64)> {
    let mut out: Vec<([f64; 2], f64)> = constraints.iter().filter(|c| c.a != [0.0, 0.0]).map(|c| (c.a, c.beta)).collect();
    out.extend([([1.0, 0.0], bx.lo[0]), ([1.0, 0.0], bx.hi[0]), ([0.0, 1.0], bx.lo[1]), ([0.0, 1.0], bx.hi[1])]);
    out
}

/// Candidate points: the origin, its projection onto every line and every
/// pairwise line intersection. The optimum of a strictly convex objective
/// over the polygon, and the least-violation point over the box, are among
/// them.
fn candidates(constraints: &[LinearConstraint], bx: &InputBox) -> Vec<[f64; 2]> {
    let ls = lines(constraints, bx);
    let mut pts = vec![[0.0, 0.0]];
    for (a, beta) in &ls {
        let n2 = a[0] * a[0] + a[1] * a[1];
        pts.push([beta * a[0] / n2, beta * a[1] / n2]);
    }
    for i in 0..ls.len() {
        for j in i + 1..ls.len() {
            let ((a, p), (b, q)) = (ls[i], ls[j]);
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() > 1e-14 {
                pts.push([(p * b[1] - q * a[1]) / det, (a[0] * q - b[0] * p) / det]);
            }
        }
    }
    pts
}

fn norm2(u: [f64; 2]) -> f64 {
    u[0] * u[0] + u[1] * u[1]
}

/// `argmin ||u||` over the box subject to every constraint. Without a
/// feasible point the box point of least total violation is returned,
/// flagged infeasible, with its per-constraint violations.
pub fn solve_min_norm(constraints: &[LinearConstraint], bx: &InputBox) -> QpSolution {
    let pts = candidates(constraints, bx);
    let feasible = |u: [f64; 2]| bx.contains(u) && constraints.iter().all(|c| c.violation(u) <= FEAS_TOL);
    let best = pts.iter().copied().filter(|u| feasible(*u)).min_by(|a, b| norm2(*a).total_cmp(&norm2(*b)));
    if let Some(u) = best {
        let u = bx.clamp(u);
        return QpSolution { u, feasible: true, violations: vec![0.0; constraints.len()] };
    }
    let total = |u: [f64; 2]| constraints.iter().map(|c| c.violation(u)).sum::<f64>();
    let u = pts
        .iter()
        .copied()
        .filter(|u| bx.contains(*u))
        .map(|u| bx.clamp(u))
        .min_by(|a, b| total(*a).total_cmp(&total(*b)).then(norm2(*a).total_cmp(&norm2(*b))))
        .unwrap_or([0.0, 0.0]);
    QpSolution { u, feasible: false, violations: constraints.iter().map(|c| c.violation(u)).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inactive_constraints_give_zero() {
        let s = solve_min_norm(&[LinearConstraint::new([1.0, 0.0], -1.0)], &InputBox::symmetric(1.0));
        assert!(s.feasible);
        assert_eq!(s.u, [0.0, 0.0]);
    }

    #[test]
    fn projection_onto_half_plane() {
        let s = solve_min_norm(&[LinearConstraint::new([1.0, 0.0], 2.0)], &InputBox::symmetric(3.0));
        assert!(s.feasible);
        assert!((s.u[0] - 2.0).abs() < 1e-12 && s.u[1].abs() < 1e-12);
    }

    #[test]
    fn small_box_is_infeasible() {
        let s = solve_min_norm(&[LinearConstraint::new([1.0, 0.0], 2.0)], &InputBox::symmetric(1.0));
        assert!(!s.feasible);
        assert_eq!(s.u[0], 1.0);
        assert!((s.violations[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_constraints_meet_at_corner() {
        let cs = [LinearConstraint::new([1.0, 0.0], 1.0), LinearConstraint::new([0.0, 1.0], 1.0)];
        let s = solve_min_norm(&cs, &InputBox::symmetric(2.0));
        assert!((s.u[0] - 1.0).abs() < 1e-12 && (s.u[1] - 1.0).abs() < 1e-12);
    }
}
