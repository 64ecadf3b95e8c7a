use crate::error::{shape_err, Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Backward, GradSink, Tape, Var};
use crate::tensor::Tensor;

struct CrossEntropy<T> {
    logits: Var,
    targets: Vec<usize>,
    probs: Vec<T>,
}

impl<T: Scalar> Backward<T> for CrossEntropy<T> {
    fn backward(&self, _tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        let rows = self.targets.len();
        let k = self.probs.len() / rows;
        let scale = grad[0] / T::lit(rows as f64);
        sink.add_with(self.logits, |i| {
            let onehot = if self.targets[i / k] == i % k { T::one() } else { T::zero() };
            (self.probs[i] - onehot) * scale
        });
        Ok(())
    }
}

struct Bce<T> {
    probs: Var,
    targets: Vec<T>,
}

impl<T: Scalar> Backward<T> for Bce<T> {
    fn backward(&self, tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        let p = tape.value(self.probs).data();
        let scale = grad[0] / T::lit(p.len() as f64);
        let one = T::one();
        sink.add_with(self.probs, |i| {
            let t = self.targets[i];
            (-t / p[i] + (one - t) / (one - p[i])) * scale
        });
        Ok(())
    }
}

struct Mse {
    a: Var,
    b: Var,
}

impl<T: Scalar> Backward<T> for Mse {
    fn backward(&self, tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        let a = tape.value(self.a).data();
        let b = tape.value(self.b).data();
        let scale = grad[0] * T::lit(2.0) / T::lit(a.len() as f64);
        sink.add_with(self.a, |i| (a[i] - b[i]) * scale);
        sink.add_with(self.b, |i| (b[i] - a[i]) * scale);
        Ok(())
    }
}

/// Row-wise softmax of `logits` viewed as `[rows, k]`, max-subtracted.
pub fn softmax_rows<T: Scalar>(logits: &[T], k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); logits.len()];
    for (src, dst) in logits.chunks(k).zip(out.chunks_mut(k)) {
        let max = src.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut total = T::zero();
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            total = total + *d;
        }
        dst.iter_mut().for_each(|d| *d = *d / total);
    }
    out
}

impl<T: Scalar> Tape<T> {
    /// Mean over positions of `-log softmax(logits)[target]`; logits are `[..., K]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        self.check(logits)?;
        let lv = self.value(logits);
        let k = lv.last_dim();
        let rows = lv.len() / k;
        if targets.len() != rows {
            return Err(shape_err("cross_entropy", lv.shape(), &[targets.len()]));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(TensorError::Index {
                op: "cross_entropy",
                index: bad,
                size: k,
            });
        }
        let mut total = T::zero();
        for (row, &t) in lv.data().chunks(k).zip(targets) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = row.iter().fold(T::zero(), |a, &v| a + (v - max).exp()).ln() + max;
            total = total + (lse - row[t]);
        }
        let probs = softmax_rows(lv.data(), k);
        let value = Tensor::scalar(total / T::lit(rows as f64));
        let op = CrossEntropy {
            logits,
            targets: targets.to_vec(),
            probs,
        };
        self.push("cross_entropy", value, &[logits], op)
    }

    /// Mean binary cross-entropy of probabilities in `(0, 1)` against `{0, 1}` targets.
    pub fn bce(&mut self, probs: Var, targets: &Tensor<T>) -> Result<Var> {
        self.check(probs)?;
        let pv = self.value(probs);
        if pv.shape() != targets.shape() {
            return Err(shape_err("bce", pv.shape(), targets.shape()));
        }
        if let Some(t) = targets.data().iter().find(|&&t| t != T::zero() && t != T::one()) {
            return Err(TensorError::Domain {
                op: "bce",
                detail: format!("target {t} is not 0 or 1"),
            });
        }
        if let Some(p) = pv.data().iter().find(|&&p| !(p > T::zero() && p < T::one())) {
            return Err(TensorError::Domain {
                op: "bce",
                detail: format!("probability {p} outside (0, 1)"),
            });
        }
        let one = T::one();
        let total = pv
            .data()
            .iter()
            .zip(targets.data())
            .fold(T::zero(), |acc, (&p, &t)| acc - (t * p.ln() + (one - t) * (one - p).ln()));
        let value = Tensor::scalar(total / T::lit(pv.len() as f64));
        let op = Bce {
            probs,
            targets: targets.data().to_vec(),
        };
        self.push("bce", value, &[probs], op)
    }

    /// Mean of `(a - b)^2` over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("mse", av.shape(), bv.shape()));
        }
        let total = av
            .data()
            .iter()
            .zip(bv.data())
            .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
        let value = Tensor::scalar(total / T::lit(av.len() as f64));
        self.push("mse", value, &[a, b], Mse { a, b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ce(logits: Vec<f64>, k: usize, targets: &[usize]) -> f64 {
        let mut t = Tape::new();
        let rows = logits.len() / k;
        let l = t.constant(Tensor::new(vec![rows, k], logits).unwrap());
        let y = t.cross_entropy(l, targets).unwrap();
        t.value(y).data()[0]
    }

    fn bce(p: f64, target: f64) -> f64 {
        let mut t = Tape::new();
        let pv = t.constant(Tensor::scalar(p));
        let y = t.bce(pv, &Tensor::scalar(target)).unwrap();
        t.value(y).data()[0]
    }

    #[test]
    fn cross_entropy_reference_values() {
        assert!((ce(vec![0.0; 256], 256, &[17]) - 256f64.ln()).abs() < 1e-12);
        assert!((ce(vec![1.0, 0.0], 2, &[0]) - 0.313_261_687_518_222_8).abs() < 1e-12);
        let big = ce(vec![60.0, 0.0, 0.0], 3, &[0]);
        assert!(big < 1e-20);
    }

    #[test]
    fn cross_entropy_survives_huge_logits() {
        let v = ce(vec![1e4, -1e4], 2, &[1]);
        assert!((v - 2e4).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_bad_target() {
        let mut t = Tape::<f64>::new();
        let l = t.constant(Tensor::zeros(vec![2, 3]));
        assert!(matches!(t.cross_entropy(l, &[0, 3]), Err(TensorError::Index { .. })));
    }

    #[test]
    fn bce_reference_values() {
        assert!((bce(0.5, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!((bce(0.9, 0.0) - 2.302_585_092_994_045_7).abs() < 1e-12);
        assert!(bce(1.0 - 1e-7, 1.0) < 1.1e-7);
    }

    #[test]
    fn bce_domain_errors() {
        let mut t = Tape::<f64>::new();
        let p = t.constant(Tensor::scalar(0.5));
        assert!(matches!(t.bce(p, &Tensor::scalar(0.5)), Err(TensorError::Domain { .. })));
        let q = t.constant(Tensor::scalar(1.0));
        assert!(matches!(t.bce(q, &Tensor::scalar(1.0)), Err(TensorError::Domain { .. })));
    }
}
