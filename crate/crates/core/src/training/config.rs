use serde::{Deserialize, Serialize};

use crate::dualnet::PhaseMethod;
use crate::error::{Error, Result};

/// Objective minimized by a training stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Magnitude,
    Naive,
    Mdpp,
    Smdp,
    /// Combiner-only training on top of magnitude-dependent phase quantization.
    Mdpq,
}

impl LossKind {
    pub fn for_method(method: PhaseMethod) -> Self {
        match method {
            PhaseMethod::Smdp => LossKind::Smdp,
            PhaseMethod::Naive => LossKind::Naive,
            PhaseMethod::Mdpp => LossKind::Mdpp,
            PhaseMethod::Mdpq => LossKind::Mdpq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrainConfig {
    /// 1000 epochs, batch 200.
    pub fn paper() -> Self {
        Self {
            epochs: 1000,
            batch_size: 200,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip: 5.0,
            seed: 0,
        }
    }

    /// 100 epochs, batch 50.
    pub fn desk() -> Self {
        Self {
            epochs: 100,
            batch_size: 50,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) || !(self.grad_clip >= 0.0) {
            return Err(Error::invalid("epsilon must be positive and grad_clip non-negative"));
        }
        Ok(())
    }
}
