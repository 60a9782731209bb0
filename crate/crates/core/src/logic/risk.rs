use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::formula::Formula;
use super::stl::{stl_robustness_at, Trace};
use super::LogicError;

/// Parameters of a Monte-Carlo satisfaction estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskQuery {
    pub n_samples: usize,
    pub seed: u64,
    /// Two-sided confidence of the Hoeffding interval, e.g. 0.95.
    pub confidence: f64,
    /// Maximal tolerated failure probability.
    pub epsilon: f64,
}

impl RiskQuery {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self { n_samples, seed, confidence: 0.95, epsilon: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub n_samples: usize,
    pub satisfied: usize,
    /// Empirical satisfaction probability.
    pub p_hat: f64,
    pub half_width: f64,
    /// `1 - p_hat`.
    pub risk: f64,
    /// `p_hat - half_width > 1 - epsilon`.
    pub pass: bool,
}

/// Half-width `sqrt(ln(2 / delta) / (2 n))` of the two-sided Hoeffding
/// interval for a mean of `n` Bernoulli samples at confidence `1 - delta`.
pub fn hoeffding_half_width(n: usize, confidence: f64) -> f64 {
    let delta = 1.0 - confidence;
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Estimates `P(w |= formula)` from `query.n_samples` rollouts.
///
/// Sample `i` draws from a ChaCha8 generator seeded with `query.seed` on
/// stream `i`, so the result does not depend on thread scheduling. A rollout
/// counts as satisfying when its robustness at the first sample is `>= 0`.
pub fn estimate_risk<S>(source: S, formula: &Formula, query: &RiskQuery) -> Result<RiskEstimate, LogicError>
where
    S: Fn(&mut ChaCha8Rng) -> Trace + Sync,
{
    if query.n_samples == 0 {
        return Err(LogicError::InvalidSampleCount);
    }
    if !(query.confidence > 0.0 && query.confidence < 1.0) {
        return Err(LogicError::InvalidConfidence(query.confidence));
    }
    let satisfied = (0..query.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(query.seed);
            rng.set_stream(i as u64);
            let trace = source(&mut rng);
            stl_robustness_at(&trace, formula, 0).map(|r| usize::from(r >= 0.0))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let p_hat = satisfied as f64 / query.n_samples as f64;
    let half_width = hoeffding_half_width(query.n_samples, query.confidence);
    Ok(RiskEstimate {
        n_samples: query.n_samples,
        satisfied,
        p_hat,
        half_width,
        risk: 1.0 - p_hat,
        pass: p_hat - half_width > 1.0 - query.epsilon,
    })
}
