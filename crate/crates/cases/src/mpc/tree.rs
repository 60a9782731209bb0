use masim_core::env::{step_unicycle, InputBound};
use serde::{Deserialize, Serialize};

use super::dubins::DubinsIntent;
use super::MpcError;

/// Intruder turn choice inside the robust horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// Maximum turn rate.
    Max,
    /// Minimum turn rate.
    Min,
    /// Follow the Dubins intent.
    Nominal,
}

/// Branch of scenario `j` (1-based) at stage `k`:
/// `c = ceil(j / 3^(n_r - k - 1)) mod 3`, with 0 -> max, 1 -> min,
/// 2 -> nominal. Stages at or past the robust horizon are nominal.
pub fn branch_selector(j: usize, k: usize, n_r: usize) -> Result<Branch, MpcError> {
    let m = 3usize.pow(n_r as u32);
    if j == 0 || j > m {
        return Err(MpcError::ScenarioIndex { j, count: m });
    }
    if k >= n_r {
        return Ok(Branch::Nominal);
    }
    let block = 3usize.pow((n_r - k - 1) as u32);
    Ok(match j.div_ceil(block) % 3 {
        0 => Branch::Max,
        1 => Branch::Min,
        _ => Branch::Nominal,
    })
}

/// Intruder turn rate `u^{2,j}_k` at absolute time `t + k te`.
pub fn intruder_branch_input(
    j: usize,
    k: usize,
    n_r: usize,
    bound: InputBound,
    intent: &DubinsIntent,
    t: f64,
) -> Result<f64, MpcError> {
    Ok(match branch_selector(j, k, n_r)? {
        Branch::Max => bound.hi,
        Branch::Min => bound.lo,
        Branch::Nominal => intent.input(t + k as f64 * intent.te),
    })
}

/// All `3^n_r` intruder branch words, scenario `j` at index `j - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTree {
    pub robust_horizon: usize,
    pub words: Vec<Vec<Branch>>,
}

impl ScenarioTree {
    pub fn new(robust_horizon: usize) -> Self {
        let m = 3usize.pow(robust_horizon as u32);
        let words = (1..=m)
            .map(|j| (0..robust_horizon).map(|k| branch_selector(j, k, robust_horizon).expect("j in range")).collect())
            .collect();
        Self { robust_horizon, words }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Predicted intruder states `s^{2,j}_0..=s^{2,j}_n` for every scenario.
    /// A scenario holds position from the first stage that lies within
    /// `arrival_tolerance` of the intent's target, as the intruder does.
    pub fn predict(
        &self,
        intruder: [f64; 3],
        arrival_tolerance: f64,
        intent: &DubinsIntent,
        bound: InputBound,
        t: f64,
        horizon: usize,
    ) -> Vec<Vec<[f64; 3]>> {
        (1..=self.len())
            .map(|j| {
                let mut s = intruder;
                let mut out = Vec::with_capacity(horizon + 1);
                out.push(s);
                for k in 0..horizon {
                    if !has_arrived(s, intent.target, arrival_tolerance) {
                        let u = intruder_branch_input(j, k, self.robust_horizon, bound, intent, t)
                            .expect("scenario index from own range");
                        s = step_unicycle(s, intent.speed, u, intent.te);
                    }
                    out.push(s);
                }
                out
            })
            .collect()
    }
}

/// Position within `tolerance` of `target`.
pub fn has_arrived(s: [f64; 3], target: [f64; 3], tolerance: f64) -> bool {
    (s[0] - target[0]).hypot(s[1] - target[1]) <= tolerance
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn hand_evaluated_entries() {
        assert_eq!(branch_selector(1, 0, 2).unwrap(), Branch::Min);
        assert_eq!(branch_selector(7, 0, 2).unwrap(), Branch::Max);
        assert_eq!(branch_selector(2, 1, 2).unwrap(), Branch::Nominal);
        assert_eq!(branch_selector(2, 5, 2).unwrap(), Branch::Nominal);
        assert!(branch_selector(0, 0, 2).is_err());
        assert!(branch_selector(10, 0, 2).is_err());
    }

    #[test]
    fn words_are_a_bijection() {
        for n_r in 0..5 {
            let tree = ScenarioTree::new(n_r);
            assert_eq!(tree.len(), 3usize.pow(n_r as u32));
            let distinct: HashSet<_> = tree.words.iter().collect();
            assert_eq!(distinct.len(), tree.len());
        }
    }
}
