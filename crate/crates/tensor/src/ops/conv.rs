use crate::conv::{col2im, gather_kernel, im2col, scatter_kernel, taps, ConvGeom, MaskSpec, Padding};
use crate::error::{shape_err, Result, TensorError};
use crate::scalar::{gemm, Scalar, Trans};
use crate::tape::{Backward, GradSink, Tape, Var};
use crate::tensor::Tensor;

/// Stride, padding and optional causal mask of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvOpts {
    pub stride: (usize, usize),
    pub padding: Padding,
    pub mask: Option<MaskSpec>,
}

impl Default for ConvOpts {
    fn default() -> Self {
        Self {
            stride: (1, 1),
            padding: Padding::Same,
            mask: None,
        }
    }
}

impl ConvOpts {
    pub fn strided(s: usize) -> Self {
        Self {
            stride: (s, s),
            ..Self::default()
        }
    }

    pub fn masked(mask: MaskSpec) -> Self {
        Self {
            mask: Some(mask),
            ..Self::default()
        }
    }
}

fn check_bias<T: Scalar>(bias: Option<&Tensor<T>>, channels: usize, op: &'static str) -> Result<()> {
    match bias {
        Some(b) if b.shape() != [channels] => Err(shape_err(op, b.shape(), &[channels])),
        _ => Ok(()),
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: Option<&Tensor<T>>) {
    if let Some(b) = bias {
        let c = b.len();
        for (i, v) in out.iter_mut().enumerate() {
            *v = *v + b.data()[i % c];
        }
    }
}

fn bias_grad<T: Scalar>(grad: &[T], channels: usize) -> Vec<T> {
    let mut db = vec![T::zero(); channels];
    for (i, &g) in grad.iter().enumerate() {
        db[i % channels] = db[i % channels] + g;
    }
    db
}

struct ConvSaved<T> {
    input: Var,
    kernel: Var,
    bias: Option<Var>,
    geom: ConvGeom,
    taps: Vec<(usize, usize)>,
    kernel_compact: Vec<T>,
    cols: Vec<T>,
}

fn conv_forward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    opts: ConvOpts,
) -> Result<(Tensor<T>, ConvGeom, Vec<(usize, usize)>, Vec<T>, Vec<T>)> {
    let geom = ConvGeom::new(x.shape(), k.shape(), opts.stride, opts.padding)?;
    if let Some(m) = &opts.mask {
        if opts.stride != (1, 1) {
            return Err(TensorError::Contract("masked conv2d requires stride (1, 1)".into()));
        }
        if (m.kh, m.kw) != (geom.kh, geom.kw) {
            return Err(shape_err("conv2d mask", &[m.kh, m.kw], &geom.kernel_shape()[..2]));
        }
    }
    check_bias(bias, geom.cout, "conv2d bias")?;
    let taps = taps(&geom, opts.mask.as_ref());
    let cols = im2col(x.data(), &geom, &taps);
    let kc = gather_kernel(k.data(), &geom, &taps);
    let mut out = vec![T::zero(); geom.rows() * geom.cout];
    gemm(geom.rows(), taps.len() * geom.cin, geom.cout, &cols, Trans::No, &kc, Trans::No, &mut out, false);
    add_bias(&mut out, bias);
    Ok((Tensor::new(geom.output_shape().to_vec(), out)?, geom, taps, kc, cols))
}

impl<T: Scalar> Backward<T> for ConvSaved<T> {
    fn backward(&self, _tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        let g = &self.geom;
        let width = self.taps.len() * g.cin;
        if sink.wants(self.input) {
            let mut dcols = vec![T::zero(); g.rows() * width];
            gemm(g.rows(), g.cout, width, grad, Trans::No, &self.kernel_compact, Trans::Yes, &mut dcols, false);
            sink.add(self.input, col2im(&dcols, g, &self.taps));
        }
        if sink.wants(self.kernel) {
            let mut dk = vec![T::zero(); width * g.cout];
            gemm(width, g.rows(), g.cout, &self.cols, Trans::Yes, grad, Trans::No, &mut dk, false);
            sink.add(self.kernel, scatter_kernel(&dk, g, &self.taps));
        }
        if let Some(b) = self.bias {
            if sink.wants(b) {
                sink.add(b, bias_grad(grad, g.cout));
            }
        }
        Ok(())
    }
}

struct ConvTransposeSaved {
    input: Var,
    kernel: Var,
    bias: Option<Var>,
    /// Geometry of the forward convolution this op is the adjoint of.
    geom: ConvGeom,
    taps: Vec<(usize, usize)>,
}

/// Geometry of the convolution whose input-adjoint is the transpose conv of `y` by `k`.
fn transpose_geom(y: &[usize], k: &[usize], stride: (usize, usize)) -> Result<ConvGeom> {
    if !matches!(stride, (1, 1) | (2, 2)) {
        return Err(TensorError::Contract(format!(
            "conv2d_transpose stride must be (1,1) or (2,2), got {stride:?}"
        )));
    }
    if y.len() != 4 || k.len() != 4 || y[3] != k[3] {
        return Err(shape_err("conv2d_transpose", y, k));
    }
    let full = [y[0], y[1] * stride.0, y[2] * stride.1, k[2]];
    let geom = ConvGeom::new(&full, k, stride, Padding::Same)?;
    debug_assert_eq!((geom.oh, geom.ow), (y[1], y[2]));
    Ok(geom)
}

fn conv_transpose_forward<T: Scalar>(
    y: &Tensor<T>,
    k: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: (usize, usize),
) -> Result<(Tensor<T>, ConvGeom, Vec<(usize, usize)>)> {
    let geom = transpose_geom(y.shape(), k.shape(), stride)?;
    check_bias(bias, geom.cin, "conv2d_transpose bias")?;
    let taps = taps(&geom, None);
    let width = taps.len() * geom.cin;
    let mut cols = vec![T::zero(); geom.rows() * width];
    gemm(geom.rows(), geom.cout, width, y.data(), Trans::No, k.data(), Trans::Yes, &mut cols, false);
    let mut out = col2im(&cols, &geom, &taps);
    add_bias(&mut out, bias);
    Ok((Tensor::new(geom.input_shape().to_vec(), out)?, geom, taps))
}

impl<T: Scalar> Backward<T> for ConvTransposeSaved {
    fn backward(&self, tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        let g = &self.geom;
        let width = self.taps.len() * g.cin;
        let gcols = im2col(grad, g, &self.taps);
        if sink.wants(self.input) {
            let k = tape.value(self.kernel).data();
            let mut dy = vec![T::zero(); g.rows() * g.cout];
            gemm(g.rows(), width, g.cout, &gcols, Trans::No, k, Trans::No, &mut dy, false);
            sink.add(self.input, dy);
        }
        if sink.wants(self.kernel) {
            let y = tape.value(self.input).data();
            let mut dk = vec![T::zero(); width * g.cout];
            gemm(width, g.rows(), g.cout, &gcols, Trans::Yes, y, Trans::No, &mut dk, false);
            sink.add(self.kernel, dk);
        }
        if let Some(b) = self.bias {
            if sink.wants(b) {
                sink.add(b, bias_grad(grad, g.cin));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Tape<T> {
    /// NHWC convolution: input `[N,H,W,Cin]`, kernel `[kh,kw,Cin,Cout]`, bias `[Cout]`.
    ///
    /// Masked taps are dropped from the product entirely, so they contribute
    /// exactly nothing to the output and receive an exactly-zero gradient.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, opts: ConvOpts) -> Result<Var> {
        self.check(input)?;
        self.check(kernel)?;
        if let Some(b) = bias {
            self.check(b)?;
        }
        let (value, geom, taps, kernel_compact, cols) = conv_forward(
            self.value(input),
            self.value(kernel),
            bias.map(|b| self.value(b)),
            opts,
        )?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        let keep_cols = self.requires_grad(kernel);
        let saved = ConvSaved {
            input,
            kernel,
            bias,
            geom,
            taps,
            kernel_compact,
            cols: if keep_cols { cols } else { Vec::new() },
        };
        self.push("conv2d", value, &inputs, saved)
    }

    /// Adjoint of [`conv2d`](Self::conv2d) with same padding.
    ///
    /// Input `[N,H,W,Cin]`, kernel `[kh,kw,Cout,Cin]` (the kernel of the forward
    /// conv mapping `Cout -> Cin`), output `[N, H*sh, W*sw, Cout]`.
    pub fn conv2d_transpose(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: (usize, usize),
    ) -> Result<Var> {
        self.check(input)?;
        self.check(kernel)?;
        if let Some(b) = bias {
            self.check(b)?;
        }
        let (value, geom, taps) =
            conv_transpose_forward(self.value(input), self.value(kernel), bias.map(|b| self.value(b)), stride)?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        let saved = ConvTransposeSaved {
            input,
            kernel,
            bias,
            geom,
            taps,
        };
        self.push("conv2d_transpose", value, &inputs, saved)
    }
}

/// Tape-free [`Tape::conv2d`].
pub fn conv2d<T: Scalar>(x: &Tensor<T>, kernel: &Tensor<T>, bias: Option<&Tensor<T>>, opts: ConvOpts) -> Result<Tensor<T>> {
    conv_forward(x, kernel, bias, opts).map(|r| r.0)
}

/// Tape-free [`Tape::conv2d_transpose`].
pub fn conv2d_transpose<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: (usize, usize),
) -> Result<Tensor<T>> {
    conv_transpose_forward(x, kernel, bias, stride).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::MaskKind;
    use crate::rng::Rng;

    fn randn(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| rng.uniform(-1.0, 1.0))
    }

    /// Direct-loop reference convolution, independent of im2col.
    fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, stride: (usize, usize), padding: Padding) -> Tensor<f64> {
        let g = ConvGeom::new(x.shape(), k.shape(), stride, padding).unwrap();
        let mut out = Tensor::zeros(g.output_shape().to_vec());
        for n in 0..g.n {
            for oi in 0..g.oh {
                for oj in 0..g.ow {
                    for co in 0..g.cout {
                        let mut acc = 0.0;
                        for ki in 0..g.kh {
                            for kj in 0..g.kw {
                                let ih = (oi * g.sh + ki) as isize - g.pad_top as isize;
                                let iw = (oj * g.sw + kj) as isize - g.pad_left as isize;
                                if ih < 0 || iw < 0 || ih >= g.h as isize || iw >= g.w as isize {
                                    continue;
                                }
                                for ci in 0..g.cin {
                                    acc += x.at(&[n, ih as usize, iw as usize, ci]) * k.at(&[ki, kj, ci, co]);
                                }
                            }
                        }
                        let off = out.offset(&[n, oi, oj, co]);
                        out.data_mut()[off] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        let mut rng = Rng::seed(11);
        for &(h, w, kh, kw, s, pad) in &[
            (5, 4, 3, 3, 1, Padding::Same),
            (6, 5, 4, 4, 2, Padding::Same),
            (7, 6, 3, 2, 2, Padding::Valid),
            (4, 4, 4, 4, 1, Padding::Same),
        ] {
            let x = randn(&[2, h, w, 3], &mut rng);
            let k = randn(&[kh, kw, 3, 4], &mut rng);
            let got = conv2d(&x, &k, None, ConvOpts { stride: (s, s), padding: pad, mask: None }).unwrap();
            let want = naive_conv(&x, &k, (s, s), pad);
            assert!(got.max_abs_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn encoder_shape_path() {
        let x = Tensor::<f32>::zeros(vec![1, 52, 16, 4]);
        let k = Tensor::<f32>::zeros(vec![4, 4, 4, 64]);
        let y = conv2d(&x, &k, None, ConvOpts::strided(2)).unwrap();
        assert_eq!(y.shape(), &[1, 26, 8, 64]);
        let k2 = Tensor::<f32>::zeros(vec![4, 4, 64, 8]);
        let z = conv2d(&y, &k2, None, ConvOpts::strided(2)).unwrap();
        assert_eq!(z.shape(), &[1, 13, 4, 8]);
    }

    #[test]
    fn transpose_doubles_spatial_dims() {
        let x = Tensor::<f32>::zeros(vec![1, 13, 4, 8]);
        let k = Tensor::<f32>::zeros(vec![4, 4, 6, 8]);
        let y = conv2d_transpose(&x, &k, None, (2, 2)).unwrap();
        assert_eq!(y.shape(), &[1, 26, 8, 6]);
        let k2 = Tensor::<f32>::zeros(vec![4, 4, 4, 6]);
        let z = conv2d_transpose(&y, &k2, None, (2, 2)).unwrap();
        assert_eq!(z.shape(), &[1, 52, 16, 4]);
        assert!(conv2d_transpose(&x, &k, None, (3, 3)).is_err());
    }

    #[test]
    fn identity_transpose_is_identity() {
        let mut rng = Rng::seed(2);
        let x = randn(&[2, 3, 5, 3], &mut rng);
        let k = Tensor::from_fn(vec![1, 1, 3, 3], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 });
        assert_eq!(conv2d_transpose(&x, &k, None, (1, 1)).unwrap(), x);
    }

    #[test]
    fn masked_all_ones_kernel_counts_taps() {
        // Single interior position on a 3x3 grid of ones.
        let x = Tensor::<f64>::ones(vec![1, 3, 3, 1]);
        let k = Tensor::<f64>::ones(vec![3, 3, 1, 1]);
        for (kind, want) in [(MaskKind::A, 4.0), (MaskKind::B, 5.0)] {
            let m = MaskSpec::new(kind, 3, 3).unwrap();
            let y = conv2d(&x, &k, None, ConvOpts::masked(m)).unwrap();
            assert_eq!(y.at(&[0, 1, 1, 0]), want);
        }
    }

    #[test]
    fn masked_conv_rejects_stride() {
        let x = Tensor::<f64>::ones(vec![1, 4, 4, 1]);
        let k = Tensor::<f64>::ones(vec![3, 3, 1, 1]);
        let opts = ConvOpts {
            stride: (2, 2),
            padding: Padding::Same,
            mask: Some(MaskSpec::new(MaskKind::A, 3, 3).unwrap()),
        };
        assert!(matches!(conv2d(&x, &k, None, opts), Err(TensorError::Contract(_))));
    }

    #[test]
    fn masked_taps_get_zero_kernel_gradient() {
        let mut rng = Rng::seed(5);
        let mut t = Tape::<f64>::new();
        let x = t.constant(randn(&[1, 4, 4, 2], &mut rng));
        let k = t.param(randn(&[3, 3, 2, 2], &mut rng));
        let m = MaskSpec::new(MaskKind::A, 3, 3).unwrap();
        let y = t.conv2d(x, k, None, ConvOpts::masked(m)).unwrap();
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap().get(&t, k);
        for ki in 0..3 {
            for kj in 0..3 {
                let nonzero = (0..4).any(|c| g.data()[(ki * 3 + kj) * 4 + c] != 0.0);
                assert_eq!(nonzero, m.allows(ki, kj), "tap {ki},{kj}");
            }
        }
    }
}
