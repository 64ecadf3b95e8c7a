//! Named parameter sets bound onto a tape.

use std::collections::BTreeMap;

use recomp_tensor::{Gradients, Scalar, Tape, Tensor, Var};

use crate::error::{Error, Result};

/// Parameters keyed by dotted name, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params<T> {
    pub tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Put every tensor on `tape`, trainable or as constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| {
                let var = if trainable {
                    tape.param(v.clone())
                } else {
                    tape.constant(v.clone())
                };
                (k.clone(), var)
            })
            .collect();
        Bound { vars }
    }

    /// Same names, same shapes.
    pub fn check_layout(&self, other: &Params<T>) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::invalid("parameter sets differ in size"));
        }
        for (k, v) in &self.tensors {
            let o = other.get(k)?;
            if o.shape() != v.shape() {
                return Err(Error::invalid(format!(
                    "parameter {k} has shape {:?}, expected {:?}",
                    o.shape(),
                    v.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Tape handles of a bound [`Params`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        *self.vars.get(name).unwrap_or_else(|| panic!("unbound parameter {name}"))
    }

    /// Gradient per parameter name.
    pub fn grads<T: Scalar>(&self, tape: &Tape<T>, grads: &Gradients<T>) -> Vec<(String, Tensor<T>)> {
        self.vars.iter().map(|(k, &v)| (k.clone(), grads.get(tape, v))).collect()
    }
}
