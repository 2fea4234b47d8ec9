//! Named trainable tensors and their binding onto a tape.

use std::ops::Index;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{PspError, Result};
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor.with_requires_grad(true));
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Records every parameter on `tape` as a gradient-requiring leaf.
    pub fn bind(&self, tape: &mut Tape) -> Binding {
        Binding {
            vars: self.tensors.iter().map(|t| tape.leaf(t)).collect(),
        }
    }

    /// Adds `scale ×` the gradients found in `grads` into each parameter.
    pub fn accumulate(&mut self, binding: &Binding, grads: &Gradients, scale: f64) -> Result<()> {
        for (tensor, &var) in self.tensors.iter_mut().zip(&binding.vars) {
            if let Some(g) = grads.get(var) {
                tensor.accumulate_grad(g, scale)?;
            }
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::clear_grad);
    }

    /// Replaces all values from `(name, tensor)` pairs that must match this
    /// store's names and shapes one-for-one.
    pub fn load_values(&mut self, entries: Vec<(String, Tensor)>) -> Result<()> {
        if entries.len() != self.tensors.len() {
            return Err(PspError::Checkpoint(format!(
                "checkpoint has {} parameters, model expects {}",
                entries.len(),
                self.tensors.len()
            )));
        }
        for ((name, tensor), (expected, slot)) in entries.into_iter().zip(self.names.iter().zip(&mut self.tensors)) {
            if &name != expected {
                return Err(PspError::Checkpoint(format!("parameter {name:?} where {expected:?} was expected")));
            }
            if tensor.shape() != slot.shape() {
                return Err(PspError::Checkpoint(format!(
                    "parameter {name}: shape {:?} does not match config shape {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor.with_requires_grad(true);
        }
        Ok(())
    }
}

/// Tape handles for every parameter of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Index<ParamId> for Binding {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

/// Adam state for a whole store.
#[derive(Debug, Clone)]
pub struct Optimizer {
    states: Vec<AdamState>,
}

impl Optimizer {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        Self {
            states: store.tensors.iter().map(|t| AdamState::new(t.numel(), config)).collect(),
        }
    }

    /// One update of every parameter; parameters the loss did not reach are
    /// stepped with a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for (state, tensor) in self.states.iter_mut().zip(&mut store.tensors) {
            if tensor.grad().is_none() {
                tensor.set_grad(vec![0.0; tensor.numel()])?;
            }
            state.step(tensor)?;
        }
        Ok(())
    }
}

/// Glorot-uniform matrix of the given shape.
pub(crate) fn xavier(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("finite init")
}

pub(crate) fn filled(shape: Vec<usize>, value: f64) -> Tensor {
    let numel = shape.iter().product();
    Tensor::new(shape, vec![value; numel]).expect("finite init")
}
