use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AwarenessError {
    #[error("risk {0} outside [0, 1]")]
    RiskOutOfRange(f64),
    #[error("uncertainty component {index} is {value}, must be >= 0")]
    NegativeUncertainty { index: usize, value: f64 },
    #[error("intent time stamps must be strictly increasing (sample {0})")]
    IntentNotIncreasing(usize),
}

/// One time-stamped point of a planned trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentSample {
    pub time: f64,
    pub state: Vec<f64>,
    pub input: Vec<f64>,
}

/// Belief, intent, uncertainty and risk of one agent.
///
/// Fields are private so the invariants (risk in `[0, 1]`, non-negative
/// uncertainty, increasing intent stamps) hold for every value in flight.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AwarenessVector {
    belief: Vec<f64>,
    intent: Vec<IntentSample>,
    uncertainty: Vec<f64>,
    risk: f64,
}

impl AwarenessVector {
    pub fn new(belief: Vec<f64>) -> Self {
        Self { belief, ..Self::default() }
    }

    pub fn from_parts(
        belief: Vec<f64>,
        intent: Vec<IntentSample>,
        uncertainty: Vec<f64>,
        risk: f64,
    ) -> Result<Self, AwarenessError> {
        let mut a = Self::new(belief);
        a.set_intent(intent)?;
        a.set_uncertainty(uncertainty)?;
        a.set_risk(risk)?;
        Ok(a)
    }

    pub fn belief(&self) -> &[f64] {
        &self.belief
    }

    pub fn intent(&self) -> &[IntentSample] {
        &self.intent
    }

    pub fn uncertainty(&self) -> &[f64] {
        &self.uncertainty
    }

    pub fn risk(&self) -> f64 {
        self.risk
    }

    pub fn set_belief(&mut self, belief: Vec<f64>) {
        self.belief = belief;
    }

    pub fn set_intent(&mut self, intent: Vec<IntentSample>) -> Result<(), AwarenessError> {
        if let Some(i) = (1..intent.len()).find(|&i| !(intent[i].time > intent[i - 1].time)) {
            return Err(AwarenessError::IntentNotIncreasing(i));
        }
        self.intent = intent;
        Ok(())
    }

    pub fn set_uncertainty(&mut self, uncertainty: Vec<f64>) -> Result<(), AwarenessError> {
        if let Some((index, &value)) = uncertainty.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(AwarenessError::NegativeUncertainty { index, value });
        }
        self.uncertainty = uncertainty;
        Ok(())
    }

    pub fn set_risk(&mut self, risk: f64) -> Result<(), AwarenessError> {
        if !(0.0..=1.0).contains(&risk) {
            return Err(AwarenessError::RiskOutOfRange(risk));
        }
        self.risk = risk;
        Ok(())
    }
}
