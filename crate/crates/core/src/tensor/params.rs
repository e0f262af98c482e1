//! Persistent parameter storage shared across training steps.

use super::{Scalar, Tensor};

/// Handle to one entry in a [`ParamStore`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

pub struct ParamEntry<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    /// Running statistics and other buffers are stored but never updated by
    /// the optimizer.
    pub trainable: bool,
}

/// Flat, name-addressable set of model parameters. The graph references
/// entries by [`ParamId`]; the optimizer and checkpoint code walk the store.
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>, trainable: bool) -> ParamId {
        assert!(
            self.find(name).is_none(),
            "parameter name {:?} already registered",
            name
        );
        let grad = Tensor::zeros(value.shape().to_vec());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].grad
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters (trainable and buffers).
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(T::zero());
        }
    }

    /// Plain SGD: `theta <- theta - lr * grad` on every trainable entry.
    pub fn sgd_step(&mut self, lr: T) {
        for e in &mut self.entries {
            if !e.trainable {
                continue;
            }
            for (v, &g) in e.value.data_mut().iter_mut().zip(e.grad.data()) {
                *v = *v - lr * g;
            }
        }
    }
}
