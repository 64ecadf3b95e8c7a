//! Reverse-mode differentiable NHWC arrays with the kernels needed by a
//! VQ-VAE and a gated masked-convolution prior: strided, transposed and
//! causally masked convolutions, batch norm, gated units, losses, and Adam.
//!
//! ```
//! use recomp_tensor::{Tape, Tensor};
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.param(Tensor::scalar(3.0));
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(&tape, x).data(), &[6.0]);
//! ```

pub mod adam;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod init;
mod ops;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use conv::{ConvGeom, MaskKind, MaskSpec, Padding};
pub use error::{Result, TensorError};
pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use ops::conv::{conv2d, conv2d_transpose, ConvOpts};
pub use ops::loss::softmax_rows;
pub use ops::norm::{BatchNormState, NormMode};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
