//! NHWC convolution geometry, causal masks, and the im2col/col2im lowering.

use crate::error::{shape_err, Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output dims `ceil(dim / stride)`; odd total padding puts the extra row/column at the bottom/right.
    Same,
    /// No padding; output dims `(dim - k) / stride + 1`.
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    /// Excludes the centre tap.
    A,
    /// Keeps the centre tap.
    B,
}

/// Raster-causal kernel mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub kh: usize,
    pub kw: usize,
}

impl MaskSpec {
    pub fn new(kind: MaskKind, kh: usize, kw: usize) -> Result<Self> {
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(TensorError::Contract(format!(
                "mask kernel dims must be odd, got {kh}x{kw}"
            )));
        }
        Ok(Self { kind, kh, kw })
    }

    /// Whether tap `(i, j)` survives the mask.
    pub fn allows(&self, i: usize, j: usize) -> bool {
        let (ci, cj) = (self.kh / 2, self.kw / 2);
        i < ci || (i == ci && j < cj) || (i == ci && j == cj && self.kind == MaskKind::B)
    }

    pub fn active_taps(&self) -> usize {
        (0..self.kh)
            .flat_map(|i| (0..self.kw).map(move |j| (i, j)))
            .filter(|&(i, j)| self.allows(i, j))
            .count()
    }

    /// Binary `[kh, kw, cin, cout]` mask tensor.
    pub fn to_tensor<T: Scalar>(&self, cin: usize, cout: usize) -> Tensor<T> {
        Tensor::from_fn(vec![self.kh, self.kw, cin, cout], |idx| {
            let tap = idx / (cin * cout);
            if self.allows(tap / self.kw, tap % self.kw) {
                T::one()
            } else {
                T::zero()
            }
        })
    }
}

/// Resolved shapes and offsets for one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub sh: usize,
    pub sw: usize,
    pub oh: usize,
    pub ow: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

fn out_dim(dim: usize, k: usize, s: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = dim.div_ceil(s);
            let total = ((out - 1) * s + k).saturating_sub(dim);
            Some((out, total / 2))
        }
        Padding::Valid => (k <= dim).then(|| ((dim - k) / s + 1, 0)),
    }
}

impl ConvGeom {
    /// `input` is `[N, H, W, Cin]`, `kernel` is `[kh, kw, Cin, Cout]`.
    pub fn new(
        input: &[usize],
        kernel: &[usize],
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Self> {
        if input.len() != 4 || kernel.len() != 4 || input[3] != kernel[2] {
            return Err(shape_err("conv2d", input, kernel));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(TensorError::Contract("conv2d: zero stride".into()));
        }
        let (oh, pad_top) =
            out_dim(input[1], kernel[0], stride.0, padding).ok_or_else(|| shape_err("conv2d", input, kernel))?;
        let (ow, pad_left) =
            out_dim(input[2], kernel[1], stride.1, padding).ok_or_else(|| shape_err("conv2d", input, kernel))?;
        Ok(Self {
            n: input[0],
            h: input[1],
            w: input[2],
            cin: input[3],
            kh: kernel[0],
            kw: kernel[1],
            cout: kernel[3],
            sh: stride.0,
            sw: stride.1,
            oh,
            ow,
            pad_top,
            pad_left,
        })
    }

    pub fn input_shape(&self) -> [usize; 4] {
        [self.n, self.h, self.w, self.cin]
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.n, self.oh, self.ow, self.cout]
    }

    pub fn kernel_shape(&self) -> [usize; 4] {
        [self.kh, self.kw, self.cin, self.cout]
    }

    /// Number of im2col rows.
    pub fn rows(&self) -> usize {
        self.n * self.oh * self.ow
    }

    fn source(&self, oi: usize, oj: usize, ki: usize, kj: usize) -> Option<(usize, usize)> {
        let ih = (oi * self.sh + ki).checked_sub(self.pad_top)?;
        let iw = (oj * self.sw + kj).checked_sub(self.pad_left)?;
        (ih < self.h && iw < self.w).then_some((ih, iw))
    }
}

/// Kernel taps that take part in the product.
pub fn taps(geom: &ConvGeom, mask: Option<&MaskSpec>) -> Vec<(usize, usize)> {
    (0..geom.kh)
        .flat_map(|i| (0..geom.kw).map(move |j| (i, j)))
        .filter(|&(i, j)| mask.is_none_or(|m| m.allows(i, j)))
        .collect()
}

/// Rows are output positions, columns are `(tap, cin)` pairs.
pub fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, taps: &[(usize, usize)]) -> Vec<T> {
    let ncols = taps.len() * g.cin;
    let mut cols = vec![T::zero(); g.rows() * ncols];
    for n in 0..g.n {
        for oi in 0..g.oh {
            for oj in 0..g.ow {
                let row = (n * g.oh + oi) * g.ow + oj;
                let dst_row = &mut cols[row * ncols..(row + 1) * ncols];
                for (t, &(ki, kj)) in taps.iter().enumerate() {
                    if let Some((ih, iw)) = g.source(oi, oj, ki, kj) {
                        let src = ((n * g.h + ih) * g.w + iw) * g.cin;
                        dst_row[t * g.cin..(t + 1) * g.cin].copy_from_slice(&x[src..src + g.cin]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back onto an input-shaped buffer.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, taps: &[(usize, usize)]) -> Vec<T> {
    let ncols = taps.len() * g.cin;
    let mut x = vec![T::zero(); g.n * g.h * g.w * g.cin];
    for n in 0..g.n {
        for oi in 0..g.oh {
            for oj in 0..g.ow {
                let row = (n * g.oh + oi) * g.ow + oj;
                let src_row = &cols[row * ncols..(row + 1) * ncols];
                for (t, &(ki, kj)) in taps.iter().enumerate() {
                    if let Some((ih, iw)) = g.source(oi, oj, ki, kj) {
                        let dst = ((n * g.h + ih) * g.w + iw) * g.cin;
                        for (d, &s) in x[dst..dst + g.cin]
                            .iter_mut()
                            .zip(&src_row[t * g.cin..(t + 1) * g.cin])
                        {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
    }
    x
}

/// Rows of the `[kh, kw, cin, cout]` kernel belonging to `taps`, as a `(taps*cin) x cout` matrix.
pub fn gather_kernel<T: Scalar>(kernel: &[T], g: &ConvGeom, taps: &[(usize, usize)]) -> Vec<T> {
    let block = g.cin * g.cout;
    if taps.len() == g.kh * g.kw {
        return kernel.to_vec();
    }
    let mut out = Vec::with_capacity(taps.len() * block);
    for &(ki, kj) in taps {
        let start = (ki * g.kw + kj) * block;
        out.extend_from_slice(&kernel[start..start + block]);
    }
    out
}

/// Inverse of [`gather_kernel`]; masked taps get exact zeros.
pub fn scatter_kernel<T: Scalar>(compact: &[T], g: &ConvGeom, taps: &[(usize, usize)]) -> Vec<T> {
    let block = g.cin * g.cout;
    if taps.len() == g.kh * g.kw {
        return compact.to_vec();
    }
    let mut full = vec![T::zero(); g.kh * g.kw * block];
    for (t, &(ki, kj)) in taps.iter().enumerate() {
        let start = (ki * g.kw + kj) * block;
        full[start..start + block].copy_from_slice(&compact[t * block..(t + 1) * block]);
    }
    full
}
