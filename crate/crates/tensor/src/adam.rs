//! Adam with bias correction.

use std::collections::BTreeMap;

use crate::error::{shape_err, Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.0002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moments and step count for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &[T],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if grad.len() != param.len() || state.m.len() != param.len() || state.v.len() != param.len() {
        return Err(shape_err("adam_step", param.shape(), &[grad.len(), state.m.len()]));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(TensorError::NonFinite { op: "adam_step gradient" });
    }
    state.t += 1;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let one = T::one();
    let c1 = one - T::lit(cfg.beta1.powi(state.t as i32));
    let c2 = one - T::lit(cfg.beta2.powi(state.t as i32));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    for (i, p) in param.data_mut().iter_mut().enumerate() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (one - b1) * g;
        state.v[i] = b2 * state.v[i] + (one - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over a named parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub states: BTreeMap<String, AdamState<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            states: BTreeMap::new(),
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.states.values().map(|s| s.t).max().unwrap_or(0)
    }

    /// Update every parameter that has a gradient.
    ///
    /// All gradients are validated before any parameter moves.
    pub fn step<'a>(
        &mut self,
        params: &mut BTreeMap<String, Tensor<T>>,
        grads: impl IntoIterator<Item = (&'a str, Tensor<T>)>,
    ) -> Result<()> {
        let grads: Vec<(&str, Tensor<T>)> = grads.into_iter().collect();
        for (name, g) in &grads {
            if !g.is_finite() {
                return Err(TensorError::Contract(format!("non-finite gradient for parameter {name}")));
            }
        }
        for (name, g) in grads {
            let p = params
                .get_mut(name)
                .ok_or_else(|| TensorError::Contract(format!("unknown parameter {name}")))?;
            let st = self
                .states
                .entry(name.to_string())
                .or_insert_with(|| AdamState::new(p.len()));
            adam_step(p, g.data(), st, &self.config)?;
        }
        Ok(())
    }
}
