//! Named parameter storage shared by model components.
//!
//! Parameters live outside the computation tape so that a forward pass can
//! borrow them immutably (inference stays reentrant) while the optimizer
//! mutates them between steps.

use std::collections::HashMap;

use ndarray::ArrayD;

use crate::error::{Error, Result};

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) struct ParamEntry {
    pub name: String,
    pub value: ArrayD<f64>,
    /// Trainable tensors receive optimizer updates; the rest (e.g. batch-norm
    /// running statistics) are carried state.
    pub trainable: bool,
}

/// Flat store of named tensors, keyed hierarchically ("encoder.block0.conv1.weight").
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<f64>, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name: {name}"
        );
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.clone(), id);
        self.entries.push(ParamEntry { name, value, trainable });
        id
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<f64> {
        &self.entries[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: ArrayD<f64>) {
        assert_eq!(
            self.entries[id.0].value.shape(),
            value.shape(),
            "shape change for parameter {}",
            self.entries[id.0].name
        );
        self.entries[id.0].value = value;
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All ids in registration order (stable across runs for a fixed build order).
    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.ids().filter(|id| self.is_trainable(*id)).collect()
    }

    /// Total number of scalar parameters (trainable only).
    pub fn trainable_scalar_count(&self) -> usize {
        self.ids()
            .filter(|id| self.is_trainable(*id))
            .map(|id| self.value(id).len())
            .sum()
    }

    /// Replace every stored tensor with the same-named tensor from `tensors`.
    ///
    /// Fails if a name is missing or has the wrong shape; extra names in
    /// `tensors` are rejected too, so a checkpoint must match the model
    /// exactly.
    pub fn load_tensors(&mut self, tensors: &HashMap<String, ArrayD<f64>>) -> Result<()> {
        for entry in &self.entries {
            let t = tensors.get(&entry.name).ok_or_else(|| {
                Error::Input(format!("checkpoint is missing tensor '{}'", entry.name))
            })?;
            if t.shape() != entry.value.shape() {
                return Err(Error::Input(format!(
                    "checkpoint tensor '{}' has shape {:?}, model expects {:?}",
                    entry.name,
                    t.shape(),
                    entry.value.shape()
                )));
            }
        }
        let known: usize = tensors.keys().filter(|k| self.by_name.contains_key(*k)).count();
        if known != tensors.len() {
            let extra: Vec<_> = tensors
                .keys()
                .filter(|k| !self.by_name.contains_key(*k))
                .cloned()
                .collect();
            return Err(Error::Input(format!(
                "checkpoint contains tensors unknown to the model: {}",
                extra.join(", ")
            )));
        }
        for entry in &mut self.entries {
            entry.value = tensors[&entry.name].clone();
        }
        Ok(())
    }

    /// Export all tensors by name (used by checkpointing).
    pub fn export_tensors(&self) -> Vec<(String, ArrayD<f64>)> {
        self.entries.iter().map(|e| (e.name.clone(), e.value.clone())).collect()
    }
}
