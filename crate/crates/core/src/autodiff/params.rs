//! Named parameter collections shared between the tape, the optimizer, and
//! checkpoints.

use crate::autodiff::Array;

#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    pub array: Array,
}

/// Flat ordered list of parameter tensors. Order is the contract: optimizer
/// state, gradients, and checkpoints all align by index.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    pub tensors: Vec<ParamTensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, array: Array) {
        self.tensors.push(ParamTensor { name: name.into(), array });
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(|t| t.array.numel()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }
}
