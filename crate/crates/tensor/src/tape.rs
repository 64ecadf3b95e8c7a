//! Reverse-mode gradient tape.
//!
//! Every op appends a node holding its forward value and, when any input
//! needs a gradient, a backward rule. Nodes are appended in evaluation order,
//! so walking the node list backwards is a valid reverse topological order.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of one recorded op.
pub(crate) trait Backward<T: Scalar> {
    /// Propagate `grad` (gradient w.r.t. the op output) into its inputs.
    fn backward(&self, tape: &Tape<T>, out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()>;
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Option<Box<dyn Backward<T>>>,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copy of `v`'s value with no gradient path back to `v`.
    pub fn stop_gradient(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub(crate) fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor<T>,
        inputs: &[Var],
        op: impl Backward<T> + 'static,
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|&v| self.requires_grad(v));
        self.nodes.push(Node {
            value,
            requires_grad,
            op: requires_grad.then(|| Box::new(op) as Box<dyn Backward<T>>),
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub(crate) fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(TensorError::Contract(format!("var {} does not belong to this tape", v.0)))
        }
    }

    /// Gradients of the scalar `loss` w.r.t. every `requires_grad` leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        self.check(loss)?;
        if self.value(loss).len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut slots: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        slots[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(op) = node.op.as_ref() else {
                continue;
            };
            let Some(grad) = slots[i].take() else {
                continue;
            };
            let mut sink = GradSink {
                tape: self,
                slots: &mut slots,
            };
            op.backward(self, Var(i), &grad, &mut sink)?;
        }
        let leaves = slots
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.filter(|_| self.nodes[i].op.is_none() && self.nodes[i].requires_grad))
            .collect();
        Ok(Gradients { slots: leaves })
    }
}

/// Accumulates input gradients during the backward sweep.
pub(crate) struct GradSink<'a, T: Scalar> {
    tape: &'a Tape<T>,
    slots: &'a mut Vec<Option<Vec<T>>>,
}

impl<T: Scalar> GradSink<'_, T> {
    pub fn wants(&self, v: Var) -> bool {
        self.tape.requires_grad(v)
    }

    pub fn add(&mut self, v: Var, contribution: Vec<T>) {
        if !self.wants(v) {
            return;
        }
        match &mut self.slots[v.0] {
            Some(g) => g.iter_mut().zip(&contribution).for_each(|(a, &b)| *a = *a + b),
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Add `f(i)` to every element of `v`'s gradient.
    pub fn add_with(&mut self, v: Var, f: impl Fn(usize) -> T) {
        if !self.wants(v) {
            return;
        }
        let n = self.tape.value(v).len();
        match &mut self.slots[v.0] {
            Some(g) => g.iter_mut().enumerate().for_each(|(i, a)| *a = *a + f(i)),
            slot @ None => *slot = Some((0..n).map(f).collect()),
        }
    }
}

/// Leaf gradients from [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    slots: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, or `None` if `v` is unreachable from the loss.
    pub fn get_raw(&self, v: Var) -> Option<&[T]> {
        self.slots.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for leaf `v` shaped like its value; unreachable leaves get zeros.
    pub fn get(&self, tape: &Tape<T>, v: Var) -> Tensor<T> {
        let shape = tape.shape(v).to_vec();
        match self.get_raw(v) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("gradient shape matches value"),
            None => Tensor::zeros(shape),
        }
    }
}
