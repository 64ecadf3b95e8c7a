//! Differentiate a masked convolution and compare with finite differences,
//! then show which input positions can reach one output.
//!
//! cargo run -p recomp-tensor --example masked_conv_gradcheck

use recomp_tensor::{
    conv2d, finite_diff_grad, init, max_relative_error, ConvOpts, MaskKind, MaskSpec, Rng, Tape, Tensor,
};

fn loss(x: &Tensor<f64>, k: &Tensor<f64>, opts: ConvOpts) -> recomp_tensor::Result<f64> {
    Ok(conv2d(x, k, None, opts)?.data().iter().map(|v| v.tanh()).sum())
}

fn main() -> recomp_tensor::Result<()> {
    let mut rng = Rng::seed(1);
    let opts = ConvOpts {
        mask: Some(MaskSpec::new(MaskKind::A, 3, 3)?),
        ..ConvOpts::default()
    };
    let x = init::uniform::<f64>(&[1, 5, 4, 2], 1.0, &mut rng);
    let k = init::conv_kernel::<f64>(3, 3, 2, 3, &mut rng);

    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let kv = tape.param(k.clone());
    let y = tape.conv2d(xv, kv, None, opts)?;
    let t = tape.tanh(y)?;
    let l = tape.sum(t)?;
    let grads = tape.backward(l)?;

    let num_x = finite_diff_grad(|x| loss(x, &k, opts), &x, 1e-5)?;
    let num_k = finite_diff_grad(|k| loss(&x, k, opts), &k, 1e-5)?;
    println!("input  gradient relative error {:.2e}", max_relative_error(&grads.get(&tape, xv), &num_x, 1e-3));
    println!("kernel gradient relative error {:.2e}", max_relative_error(&grads.get(&tape, kv), &num_k, 1e-3));

    // Receptive field of output (2, 1): perturb each input cell and watch it.
    println!("inputs that reach output (2,1) under mask A:");
    let base = conv2d(&x, &k, None, opts)?;
    let at = |t: &Tensor<f64>| t.data()[(2 * 4 + 1) * 3..(2 * 4 + 2) * 3].to_vec();
    for i in 0..5 {
        let row: String = (0..4)
            .map(|j| {
                let mut p = x.clone();
                p.data_mut()[(i * 4 + j) * 2] += 1.0;
                let out = conv2d(&p, &k, None, opts).map(|o| at(&o) != at(&base)).unwrap_or(false);
                if (i, j) == (2, 1) {
                    'o'
                } else if out {
                    '#'
                } else {
                    '.'
                }
            })
            .collect();
        println!("  {row}");
    }
    Ok(())
}
