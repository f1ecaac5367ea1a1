//! Adaptive-moment optimizer over a named subset of a parameter store.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::ParameterStore;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    /// First and second moments per parameter name.
    #[serde(skip)]
    pub moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// One update of every parameter in `grads`. Gradients are rescaled to
    /// global norm `cfg.grad_clip` when they exceed it.
    pub fn step(&mut self, params: &mut ParameterStore, grads: &[(String, Vec<f64>)], cfg: &TrainConfig) -> Result<()> {
        for (name, g) in grads {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("gradient of {name} is {} at index {i}", g[i])));
            }
        }
        let norm = grads.iter().flat_map(|(_, g)| g).map(|v| v * v).sum::<f64>().sqrt();
        let clip = if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
            cfg.grad_clip / norm
        } else {
            1.0
        };
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (name, g) in grads {
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::invalid(format!("gradient for unknown parameter {name:?}")))?;
            if p.len() != g.len() {
                return Err(Error::invalid(format!("gradient of {name} has the wrong length")));
            }
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            for (((w, gi), mi), vi) in p.values_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gi = gi * clip;
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
                *w -= cfg.learning_rate * (*mi / bc1) / ((*vi / bc2).sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}
