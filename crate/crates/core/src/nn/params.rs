use std::collections::HashMap;

use rand::Rng;

use super::tape::Tape;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Named trainable tensors in creation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    params: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter {name:?}")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push((name, tensor.with_requires_grad(true)));
        Ok(())
    }

    /// Uniform Glorot initialization.
    pub fn insert_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<()> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
        self.insert(name, Tensor::new(shape, values)?)
    }

    pub fn insert_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> Result<()> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.params[i].1)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in &mut self.params {
            t.zero_grad();
        }
    }

    /// Adds the gradients the tape computed for this store's parameters.
    pub fn accumulate_grads(&mut self, tape: &Tape) {
        for (name, grad) in tape.param_grads() {
            if let Some(&i) = self.index.get(name) {
                self.params[i].1.accumulate_grad(grad);
            }
        }
    }
}
