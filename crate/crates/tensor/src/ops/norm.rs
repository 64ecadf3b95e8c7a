use crate::error::{shape_err, Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Backward, GradSink, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Per-channel running statistics of a batch-norm layer.
///
/// The scale and shift are ordinary trainable tensors passed to
/// [`Tape::batch_norm`]; this holds the non-trainable part.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
    running: Option<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> BatchNormState<T> {
    pub const MOMENTUM: f64 = 0.9;
    pub const EPS: f64 = 1e-5;

    /// Fresh state; eval mode is an error until one train-mode call has run.
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
            running: None,
        }
    }

    /// State whose running statistics start at mean 0, variance 1.
    pub fn with_unit_stats(channels: usize) -> Self {
        let mut s = Self::new(channels);
        s.running = Some((vec![T::zero(); channels], vec![T::one(); channels]));
        s
    }

    pub fn running(&self) -> Option<(&[T], &[T])> {
        self.running.as_ref().map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    pub fn set_running(&mut self, mean: Vec<T>, var: Vec<T>) -> Result<()> {
        if mean.len() != self.channels || var.len() != self.channels {
            return Err(shape_err("batch_norm running stats", &[mean.len(), var.len()], &[self.channels]));
        }
        if var.iter().any(|&v| v < T::zero()) {
            return Err(TensorError::Domain {
                op: "batch_norm",
                detail: "negative running variance".into(),
            });
        }
        self.running = Some((mean, var));
        Ok(())
    }

    fn update(&mut self, mean: &[T], var: &[T]) {
        let m = T::lit(self.momentum);
        let one_m = T::one() - m;
        match &mut self.running {
            Some((rm, rv)) => {
                for c in 0..self.channels {
                    rm[c] = m * rm[c] + one_m * mean[c];
                    rv[c] = m * rv[c] + one_m * var[c];
                }
            }
            None => self.running = Some((mean.to_vec(), var.to_vec())),
        }
    }
}

struct BatchNorm<T> {
    input: Var,
    gamma: Var,
    beta: Var,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mode: NormMode,
}

impl<T: Scalar> Backward<T> for BatchNorm<T> {
    fn backward(&self, tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        let gamma = tape.value(self.gamma).data();
        let c = gamma.len();
        let m = grad.len() / c;
        let mut sum_g = vec![T::zero(); c];
        let mut sum_gx = vec![T::zero(); c];
        for (i, &g) in grad.iter().enumerate() {
            sum_g[i % c] = sum_g[i % c] + g;
            sum_gx[i % c] = sum_gx[i % c] + g * self.xhat[i];
        }
        if sink.wants(self.input) {
            let xhat = &self.xhat;
            let inv = &self.inv_std;
            match self.mode {
                NormMode::Eval => sink.add_with(self.input, |i| grad[i] * gamma[i % c] * inv[i % c]),
                NormMode::Train => {
                    let mf = T::lit(m as f64);
                    sink.add_with(self.input, |i| {
                        let ch = i % c;
                        gamma[ch] * inv[ch] / mf * (mf * grad[i] - sum_g[ch] - xhat[i] * sum_gx[ch])
                    });
                }
            }
        }
        sink.add(self.gamma, sum_gx);
        sink.add(self.beta, sum_g);
        Ok(())
    }
}

impl<T: Scalar> Tape<T> {
    /// Per-channel normalization over every axis but the last.
    ///
    /// Train mode uses batch statistics (biased variance) and folds them into
    /// `state`'s running averages; eval mode uses the running averages only.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState<T>,
        mode: NormMode,
    ) -> Result<Var> {
        self.check(x)?;
        self.check(gamma)?;
        self.check(beta)?;
        let xv = self.value(x);
        let c = xv.last_dim();
        if c != state.channels || self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(shape_err("batch_norm", xv.shape(), self.shape(gamma)));
        }
        let m = xv.len() / c;
        let eps = T::lit(state.eps);
        let (mean, var) = match mode {
            NormMode::Train => {
                if m < 2 {
                    return Err(TensorError::Contract(format!(
                        "batch_norm train mode needs at least 2 values per channel, got {m}"
                    )));
                }
                let mf = T::lit(m as f64);
                let mut mean = vec![T::zero(); c];
                for (i, &v) in xv.data().iter().enumerate() {
                    mean[i % c] = mean[i % c] + v;
                }
                mean.iter_mut().for_each(|v| *v = *v / mf);
                let mut var = vec![T::zero(); c];
                for (i, &v) in xv.data().iter().enumerate() {
                    let d = v - mean[i % c];
                    var[i % c] = var[i % c] + d * d;
                }
                var.iter_mut().for_each(|v| *v = *v / mf);
                (mean, var)
            }
            NormMode::Eval => {
                let (rm, rv) = state.running().ok_or(TensorError::BatchNormUninitialized)?;
                (rm.to_vec(), rv.to_vec())
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let xhat: Vec<T> = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - mean[i % c]) * inv_std[i % c])
            .collect();
        let out = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| g[i % c] * h + b[i % c])
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        if mode == NormMode::Train {
            state.update(&mean, &var);
        }
        let op = BatchNorm {
            input: x,
            gamma,
            beta,
            xhat,
            inv_std,
            mode,
        };
        self.push("batch_norm", value, &[x, gamma, beta], op)
    }
}
