use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Uniform in ±√(6/(fan_in+fan_out)).
pub fn glorot_uniform<T: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, limit, rng)
}

/// Glorot init for a `[kh, kw, cin, cout]` kernel.
pub fn conv_kernel<T: Scalar>(kh: usize, kw: usize, cin: usize, cout: usize, rng: &mut Rng) -> Tensor<T> {
    glorot_uniform(&[kh, kw, cin, cout], kh * kw * cin, kh * kw * cout, rng)
}

pub fn uniform<T: Scalar>(shape: &[usize], limit: f64, rng: &mut Rng) -> Tensor<T> {
    Tensor::from_fn(shape.to_vec(), |_| rng.uniform(-limit, limit))
}
