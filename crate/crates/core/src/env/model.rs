use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

/// Closed interval bound on one input channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBound {
    pub lo: f64,
    pub hi: f64,
}

impl InputBound {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn symmetric(limit: f64) -> Self {
        Self { lo: -limit, hi: limit }
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    /// Uniform on `[-scale, scale]`.
    Uniform,
}

/// Additive actuation noise on every input channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub family: NoiseFamily,
    #[serde(default)]
    pub scale: f64,
    /// Skip noise on steps whose commanded input is exactly zero, so a
    /// parked entity stays put.
    #[serde(default)]
    pub only_when_actuated: bool,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn gaussian(scale: f64) -> Self {
        Self { family: NoiseFamily::Gaussian, scale, only_when_actuated: false }
    }

    pub fn actuated(mut self) -> Self {
        self.only_when_actuated = true;
        self
    }

    pub fn is_active(&self) -> bool {
        self.scale > 0.0
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if !self.is_active() {
            return 0.0;
        }
        match self.family {
            NoiseFamily::Gaussian => Normal::new(0.0, self.scale)
                .expect("scale checked positive")
                .sample(rng),
            NoiseFamily::Uniform => Uniform::new_inclusive(-self.scale, self.scale)
                .expect("scale checked positive")
                .sample(rng),
        }
    }
}

/// Dynamics law advancing an entity's state by one sampling period.
///
/// Implementations only describe the deterministic map; input clamping and
/// noise injection are shared and live in [`advance`].
pub trait Model: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn input_bounds(&self) -> &[InputBound];
    fn noise(&self) -> &NoiseSpec;
    fn step(&self, state: &[f64], input: &[f64], dt: f64) -> Vec<f64>;
}

/// Result of advancing one modeled entity.
#[derive(Debug, Clone, PartialEq)]
pub struct Advance {
    pub state: Vec<f64>,
    pub clamped: bool,
}

/// Clamps `input` to the model bounds, adds a noise sample per channel and
/// applies the model's deterministic map.
pub fn advance(
    model: &dyn Model,
    state: &[f64],
    input: &[f64],
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Advance {
    let mut clamped = false;
    let noisy = !model.noise().only_when_actuated || input.iter().any(|v| *v != 0.0);
    let applied: Vec<f64> = model
        .input_bounds()
        .iter()
        .zip(input)
        .map(|(bound, &raw)| {
            let value = bound.clamp(raw);
            if value != raw {
                clamped = true;
            }
            if noisy {
                value + model.noise().sample(rng)
            } else {
                value
            }
        })
        .collect();
    Advance { state: model.step(state, &applied, dt), clamped }
}

/// One Euler step of the planar unicycle `(x, y, heading)` with linear speed
/// `v` and turn rate `u`. The heading is left unwrapped.
pub fn step_unicycle(state: [f64; 3], v: f64, u: f64, dt: f64) -> [f64; 3] {
    let [x, y, heading] = state;
    [
        x + dt * v * heading.cos(),
        y + dt * v * heading.sin(),
        heading + dt * u,
    ]
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// State `(x, y, heading)`, input `(v, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnicycleModel {
    bounds: [InputBound; 2],
    noise: NoiseSpec,
}

impl UnicycleModel {
    pub fn new(speed: InputBound, turn_rate: InputBound, noise: NoiseSpec) -> Self {
        Self { bounds: [speed, turn_rate], noise }
    }
}

impl Model for UnicycleModel {
    fn name(&self) -> &'static str {
        "unicycle"
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn input_bounds(&self) -> &[InputBound] {
        &self.bounds
    }

    fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    fn step(&self, state: &[f64], input: &[f64], dt: f64) -> Vec<f64> {
        step_unicycle([state[0], state[1], state[2]], input[0], input[1], dt).to_vec()
    }
}

/// State `(x, y)`, input is the planar velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleIntegratorModel {
    bounds: [InputBound; 2],
    noise: NoiseSpec,
}

impl SingleIntegratorModel {
    pub fn new(vx: InputBound, vy: InputBound, noise: NoiseSpec) -> Self {
        Self { bounds: [vx, vy], noise }
    }

    pub fn with_speed_limit(limit: f64, noise: NoiseSpec) -> Self {
        Self::new(InputBound::symmetric(limit), InputBound::symmetric(limit), noise)
    }
}

impl Model for SingleIntegratorModel {
    fn name(&self) -> &'static str {
        "single_integrator"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn input_bounds(&self) -> &[InputBound] {
        &self.bounds
    }

    fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    fn step(&self, state: &[f64], input: &[f64], dt: f64) -> Vec<f64> {
        vec![state[0] + dt * input[0], state[1] + dt * input[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn unicycle_zero_heading() {
        assert_eq!(step_unicycle([0.0, 0.0, 0.0], 1.0, 0.0, 1.0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn unicycle_quarter_turn() {
        let s = step_unicycle([0.0, 0.0, FRAC_PI_2], 2.0, 0.1, 1.0);
        assert!(s[0].abs() < 1e-12);
        assert!((s[1] - 2.0).abs() < 1e-12);
        assert!((s[2] - (FRAC_PI_2 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn unicycle_identity_at_rest() {
        let s = [1.5, -2.0, 0.7];
        assert_eq!(step_unicycle(s, 0.0, 0.0, 0.5), s);
    }

    #[test]
    fn advance_clamps_and_flags() {
        let model = SingleIntegratorModel::with_speed_limit(1.0, NoiseSpec::none());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = advance(&model, &[0.0, 0.0], &[5.0, -0.5], 1.0, &mut rng);
        assert!(out.clamped);
        assert_eq!(out.state, vec![1.0, -0.5]);
    }

    #[test]
    fn zero_scale_noise_matches_disabled() {
        let model = UnicycleModel::new(
            InputBound::new(0.0, 2.0),
            InputBound::symmetric(0.3),
            NoiseSpec::gaussian(0.0),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = advance(&model, &[0.0, 0.0, 0.2], &[1.0, 0.1], 1.0, &mut rng);
        assert_eq!(a.state, model.step(&[0.0, 0.0, 0.2], &[1.0, 0.1], 1.0));
    }

    #[test]
    fn actuated_noise_skips_parked_entities() {
        let model = SingleIntegratorModel::with_speed_limit(1.0, NoiseSpec::gaussian(0.5).actuated());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(advance(&model, &[2.0, 3.0], &[0.0, 0.0], 1.0, &mut rng).state, vec![2.0, 3.0]);
        assert_ne!(advance(&model, &[2.0, 3.0], &[0.5, 0.0], 1.0, &mut rng).state, vec![2.5, 3.0]);
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let a = wrap_angle(k as f64 * 0.77);
            assert!(a > -std::f64::consts::PI && a <= std::f64::consts::PI);
        }
    }
}
