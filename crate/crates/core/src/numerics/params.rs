use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors with gradient accumulators and Adam moments.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step: u64,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter {name}")));
        }
        let id = self.values.len();
        let zeros = Tensor::zeros(value.shape());
        self.grads.push(zeros.clone());
        self.first_moment.push(zeros.clone());
        self.second_moment.push(zeros);
        self.values.push(value);
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub(crate) fn moments_mut(&mut self, id: ParamId) -> (&mut Tensor, &mut Tensor, &mut Tensor, &Tensor) {
        let i = id.0;
        (
            &mut self.values[i],
            &mut self.first_moment[i],
            &mut self.second_moment[i],
            &self.grads[i],
        )
    }

    pub fn first_moment(&self, id: ParamId) -> &Tensor {
        &self.first_moment[id.0]
    }

    pub fn second_moment(&self, id: ParamId) -> &Tensor {
        &self.second_moment[id.0]
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn bump_step(&mut self) -> u64 {
        self.step += 1;
        self.step
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Named `(name, value)` pairs in registration order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Overwrites values from named tensors; every stored parameter must be present with its shape.
    pub fn load_values<'a>(&mut self, tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
        let mut seen = vec![false; self.values.len()];
        for (name, t) in tensors {
            let Some(&i) = self.by_name.get(name) else {
                return Err(Error::Checkpoint(format!("unknown parameter {name}")));
            };
            if t.shape() != self.values[i].shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: shape {:?} != {:?}",
                    t.shape(),
                    self.values[i].shape()
                )));
            }
            self.values[i] = t.clone();
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Checkpoint(format!("missing parameter {}", self.names[i])));
        }
        Ok(())
    }
}
