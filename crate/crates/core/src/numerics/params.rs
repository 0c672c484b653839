use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Named trainable tensors, iterated in name order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `tensor` as a tracked leaf. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter `{name}`"
            )));
        }
        self.tensors.insert(name, tensor.into_leaf(true));
        Ok(())
    }

    /// Replaces an existing entry, keeping the shape.
    pub fn replace(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if slot.shape() != tensor.shape() {
            return Err(Error::shape(
                "ParamSet::replace",
                format!("`{}`: {:?} vs {:?}", name, slot.shape(), tensor.shape()),
            ));
        }
        *slot = tensor.into_leaf(true);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Copy whose tensors are untracked, for inference or frozen models.
    pub fn frozen(&self) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.detach()))
                .collect(),
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.tensors.values().all(|t| !t.requires_grad())
    }

    /// Fresh tracked copy with empty grads.
    pub fn tracked(&self) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.clone().into_leaf(true)))
                .collect(),
        }
    }

    pub fn zero_grad(&self) {
        self.tensors.values().for_each(Tensor::zero_grad);
    }

    /// True when no tensor holds a gradient.
    pub fn grads_empty(&self) -> bool {
        self.tensors.values().all(|t| t.grad().is_none())
    }
}
