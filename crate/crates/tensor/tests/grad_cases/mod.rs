//! Finite-difference checks for every differentiable op on the tape.
//!
//! Each case draws a random small instance, reduces the op output to a scalar
//! with fixed random weights, and compares tape gradients for every input
//! against central differences in f64. The straight-through estimator is not
//! a true derivative and is checked separately by the quantizer tests.

#![allow(dead_code)]

use recomp_tensor::{
    finite_diff_grad, max_relative_error, BatchNormState, ConvOpts, MaskKind, MaskSpec, NormMode,
    Padding, Rng, Tape, Tensor, TensorError, Var,
};

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error.
pub const FLOOR: f64 = 1e-3;
pub const INSTANCES: usize = 5;

type Build = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>>;

pub struct Instance {
    pub inputs: Vec<Tensor<f64>>,
    pub build: Build,
}

pub struct Case {
    pub name: &'static str,
    pub make: fn(&mut Rng) -> Instance,
}

fn rand_t(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.uniform(-1.0, 1.0))
}

/// Values bounded away from zero, for ops with a kink at 0.
fn away_from_zero(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m: f64 = rng.uniform(0.1, 1.0);
        if rng.unit() < 0.5 {
            -m
        } else {
            m
        }
    })
}

fn dim(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn eval(inst: &Instance, weights: &Tensor<f64>, inputs: &[Tensor<f64>]) -> Result<f64, TensorError> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = (inst.build)(&mut tape, &vars)?;
    tape.value(out).dot(weights)
}

/// Max relative error over all inputs of one instance.
pub fn check(inst: &Instance, rng: &mut Rng) -> Result<f64, TensorError> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inst.inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = (inst.build)(&mut tape, &vars)?;
    let weights = rand_t(tape.shape(out), rng);
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    let loss = tape.sum(prod)?;
    let grads = tape.backward(loss)?;
    let mut worst: f64 = 0.0;
    for (i, &v) in vars.iter().enumerate() {
        let analytic = grads.get(&tape, v);
        let numeric = finite_diff_grad(
            |x| {
                let mut inputs = inst.inputs.clone();
                inputs[i] = x.clone();
                eval(inst, &weights, &inputs)
            },
            &inst.inputs[i],
            H,
        )?;
        worst = worst.max(max_relative_error(&analytic, &numeric, FLOOR));
    }
    Ok(worst)
}

fn conv_case(rng: &mut Rng, stride: usize, padding: Padding, mask: Option<MaskKind>) -> Instance {
    let (k, s) = match mask {
        Some(_) => (*rng.choose(&[3usize, 5]), 1),
        None => (dim(rng, 1, 4), stride),
    };
    let h = dim(rng, k.max(2), k + 3);
    let w = dim(rng, k.max(2), k + 2);
    let (cin, cout) = (dim(rng, 1, 3), dim(rng, 1, 3));
    let n = dim(rng, 1, 2);
    let opts = ConvOpts {
        stride: (s, s),
        padding,
        mask: mask.map(|m| MaskSpec::new(m, k, k).unwrap()),
    };
    Instance {
        inputs: vec![
            rand_t(&[n, h, w, cin], rng),
            rand_t(&[k, k, cin, cout], rng),
            rand_t(&[cout], rng),
        ],
        build: Box::new(move |t, v| t.conv2d(v[0], v[1], Some(v[2]), opts)),
    }
}

fn unary(rng: &mut Rng, f: fn(&mut Tape<f64>, Var) -> Result<Var, TensorError>, kink: bool) -> Instance {
    let shape = [dim(rng, 1, 3), dim(rng, 1, 4), dim(rng, 1, 3)];
    let x = if kink { away_from_zero(&shape, rng) } else { rand_t(&shape, rng) };
    Instance {
        inputs: vec![x],
        build: Box::new(move |t, v| f(t, v[0])),
    }
}

fn binary(rng: &mut Rng, f: fn(&mut Tape<f64>, Var, Var) -> Result<Var, TensorError>) -> Instance {
    let shape = [dim(rng, 1, 3), dim(rng, 1, 4), dim(rng, 1, 3)];
    Instance {
        inputs: vec![rand_t(&shape, rng), rand_t(&shape, rng)],
        build: Box::new(move |t, v| f(t, v[0], v[1])),
    }
}

pub fn cases() -> Vec<Case> {
    vec![
        Case { name: "conv2d same stride 1", make: |r| conv_case(r, 1, Padding::Same, None) },
        Case { name: "conv2d same stride 2", make: |r| conv_case(r, 2, Padding::Same, None) },
        Case { name: "conv2d valid stride 2", make: |r| conv_case(r, 2, Padding::Valid, None) },
        Case { name: "conv2d mask A", make: |r| conv_case(r, 1, Padding::Same, Some(MaskKind::A)) },
        Case { name: "conv2d mask B", make: |r| conv_case(r, 1, Padding::Same, Some(MaskKind::B)) },
        Case {
            name: "conv2d_transpose",
            make: |rng| {
                let s = *rng.choose(&[1usize, 2]);
                let k = dim(rng, 1, 4);
                let (h, w) = (dim(rng, 1, 4), dim(rng, 1, 3));
                let (cin, cout) = (dim(rng, 1, 3), dim(rng, 1, 3));
                let n = dim(rng, 1, 2);
                Instance {
                    inputs: vec![
                        rand_t(&[n, h, w, cin], rng),
                        rand_t(&[k, k, cout, cin], rng),
                        rand_t(&[cout], rng),
                    ],
                    build: Box::new(move |t, v| t.conv2d_transpose(v[0], v[1], Some(v[2]), (s, s))),
                }
            },
        },
        Case {
            name: "batch_norm train",
            make: |rng| {
                let c = dim(rng, 1, 3);
                let shape = [dim(rng, 1, 3), dim(rng, 1, 3), dim(rng, 2, 3), c];
                Instance {
                    inputs: vec![rand_t(&shape, rng), rand_t(&[c], rng), rand_t(&[c], rng)],
                    build: Box::new(move |t, v| {
                        let mut st = BatchNormState::new(c);
                        t.batch_norm(v[0], v[1], v[2], &mut st, NormMode::Train)
                    }),
                }
            },
        },
        Case {
            name: "batch_norm eval",
            make: |rng| {
                let c = dim(rng, 1, 3);
                let shape = [dim(rng, 1, 3), dim(rng, 1, 3), dim(rng, 1, 3), c];
                let mut st = BatchNormState::new(c);
                let mean = (0..c).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let var = (0..c).map(|_| rng.uniform(0.2, 2.0)).collect();
                st.set_running(mean, var).unwrap();
                Instance {
                    inputs: vec![rand_t(&shape, rng), rand_t(&[c], rng), rand_t(&[c], rng)],
                    build: Box::new(move |t, v| {
                        let mut st = st.clone();
                        t.batch_norm(v[0], v[1], v[2], &mut st, NormMode::Eval)
                    }),
                }
            },
        },
        Case { name: "relu", make: |r| unary(r, |t, x| t.relu(x), true) },
        Case { name: "sigmoid", make: |r| unary(r, |t, x| t.sigmoid(x), false) },
        Case { name: "tanh", make: |r| unary(r, |t, x| t.tanh(x), false) },
        Case { name: "sin", make: |r| unary(r, |t, x| t.sin(x), false) },
        Case { name: "scale", make: |r| unary(r, |t, x| t.scale(x, -1.7), false) },
        Case {
            name: "clamp",
            make: |rng| {
                // Keep values off the clamp edges at +-0.5.
                let shape = [dim(rng, 1, 3), dim(rng, 2, 4)];
                let x = Tensor::from_fn(shape.to_vec(), |i| {
                    let m: f64 = rng.uniform(0.0, 0.4);
                    if i % 3 == 0 { 0.6 + m } else if i % 3 == 1 { -0.6 - m } else { m - 0.2 }
                });
                Instance { inputs: vec![x], build: Box::new(|t, v| t.clamp(v[0], -0.5, 0.5)) }
            },
        },
        Case { name: "add", make: |r| binary(r, |t, a, b| t.add(a, b)) },
        Case { name: "sub", make: |r| binary(r, |t, a, b| t.sub(a, b)) },
        Case { name: "mul", make: |r| binary(r, |t, a, b| t.mul(a, b)) },
        Case { name: "gated_unit", make: |r| binary(r, |t, a, b| t.gated_unit(a, b)) },
        Case {
            name: "add_channels",
            make: |rng| {
                let (n, c) = (dim(rng, 1, 3), dim(rng, 1, 4));
                let shape = [n, dim(rng, 1, 3), dim(rng, 1, 3), c];
                Instance {
                    inputs: vec![rand_t(&shape, rng), rand_t(&[n, c], rng)],
                    build: Box::new(|t, v| t.add_channels(v[0], v[1])),
                }
            },
        },
        Case {
            name: "matmul",
            make: |rng| {
                let (m, k, n) = (dim(rng, 1, 4), dim(rng, 1, 5), dim(rng, 1, 4));
                Instance {
                    inputs: vec![rand_t(&[m, k], rng), rand_t(&[k, n], rng)],
                    build: Box::new(|t, v| t.matmul(v[0], v[1])),
                }
            },
        },
        Case {
            name: "embedding",
            make: |rng| {
                let (vocab, d) = (dim(rng, 2, 5), dim(rng, 1, 4));
                let ids: Vec<Option<usize>> = (0..6)
                    .map(|i| if i == 4 { None } else { Some(rng.below(vocab)) })
                    .collect();
                Instance {
                    inputs: vec![rand_t(&[vocab, d], rng)],
                    build: Box::new(move |t, v| t.embedding_or_zero(v[0], &ids, &[2, 3])),
                }
            },
        },
        Case {
            name: "concat_last",
            make: |rng| {
                let lead = [dim(rng, 1, 3), dim(rng, 1, 3)];
                let mut shapes = Vec::new();
                for _ in 0..3 {
                    shapes.push([lead[0], lead[1], dim(rng, 1, 3)]);
                }
                Instance {
                    inputs: shapes.iter().map(|s| rand_t(s, rng)).collect(),
                    build: Box::new(|t, v| t.concat_last(v)),
                }
            },
        },
        Case {
            name: "slice_last",
            make: |rng| {
                let c = dim(rng, 2, 6);
                let start = rng.below(c - 1);
                let len = 1 + rng.below(c - start);
                Instance {
                    inputs: vec![rand_t(&[dim(rng, 1, 3), 2, c], rng)],
                    build: Box::new(move |t, v| t.slice_last(v[0], start, len)),
                }
            },
        },
        Case {
            name: "reshape",
            make: |rng| {
                let (a, b) = (dim(rng, 1, 4), dim(rng, 1, 4));
                Instance {
                    inputs: vec![rand_t(&[a, b, 2], rng)],
                    build: Box::new(move |t, v| t.reshape(v[0], vec![2 * b, a])),
                }
            },
        },
        Case { name: "sum", make: |r| unary(r, |t, x| t.sum(x), false) },
        Case { name: "mean", make: |r| unary(r, |t, x| t.mean(x), false) },
        Case { name: "mse", make: |r| binary(r, |t, a, b| t.mse(a, b)) },
        Case {
            name: "bce",
            make: |rng| {
                let shape = [dim(rng, 1, 3), dim(rng, 1, 4)];
                let p = Tensor::from_fn(shape.to_vec(), |_| rng.uniform(0.05, 0.95));
                let targets = Tensor::from_fn(shape.to_vec(), |_| if rng.unit() < 0.5 { 0.0 } else { 1.0 });
                Instance { inputs: vec![p], build: Box::new(move |t, v| t.bce(v[0], &targets)) }
            },
        },
        Case {
            name: "cross_entropy",
            make: |rng| {
                let (rows, k) = (dim(rng, 1, 6), dim(rng, 2, 7));
                let targets: Vec<usize> = (0..rows).map(|_| rng.below(k)).collect();
                Instance {
                    inputs: vec![Tensor::from_fn(vec![rows, k], |_| rng.uniform(-3.0, 3.0))],
                    build: Box::new(move |t, v| t.cross_entropy(v[0], &targets)),
                }
            },
        },
    ]
}
