use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Backward, GradSink, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
enum UnaryKind<T> {
    Relu,
    Sigmoid,
    Tanh,
    Sin,
    Scale(T),
    Clamp(T, T),
}

struct Unary<T> {
    input: Var,
    kind: UnaryKind<T>,
}

impl<T: Scalar> Backward<T> for Unary<T> {
    fn backward(&self, tape: &Tape<T>, out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        let x = tape.value(self.input).data();
        let y = tape.value(out).data();
        let one = T::one();
        match self.kind {
            UnaryKind::Relu => sink.add_with(self.input, |i| if x[i] > T::zero() { grad[i] } else { T::zero() }),
            UnaryKind::Sigmoid => sink.add_with(self.input, |i| grad[i] * y[i] * (one - y[i])),
            UnaryKind::Tanh => sink.add_with(self.input, |i| grad[i] * (one - y[i] * y[i])),
            UnaryKind::Sin => sink.add_with(self.input, |i| grad[i] * x[i].cos()),
            UnaryKind::Scale(c) => sink.add_with(self.input, |i| grad[i] * c),
            UnaryKind::Clamp(lo, hi) => sink.add_with(self.input, |i| {
                if x[i] > lo && x[i] < hi {
                    grad[i]
                } else {
                    T::zero()
                }
            }),
        }
        Ok(())
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    // Split by sign so neither branch overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Clone, Copy, Debug)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

struct Binary {
    a: Var,
    b: Var,
    kind: BinaryKind,
}

impl<T: Scalar> Backward<T> for Binary {
    fn backward(&self, tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        match self.kind {
            BinaryKind::Add => {
                sink.add_with(self.a, |i| grad[i]);
                sink.add_with(self.b, |i| grad[i]);
            }
            BinaryKind::Sub => {
                sink.add_with(self.a, |i| grad[i]);
                sink.add_with(self.b, |i| -grad[i]);
            }
            BinaryKind::Mul => {
                let av = tape.value(self.a).data();
                let bv = tape.value(self.b).data();
                sink.add_with(self.a, |i| grad[i] * bv[i]);
                sink.add_with(self.b, |i| grad[i] * av[i]);
            }
        }
        Ok(())
    }
}

struct Gated {
    f: Var,
    g: Var,
}

impl<T: Scalar> Backward<T> for Gated {
    fn backward(&self, tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        let f = tape.value(self.f).data();
        let g = tape.value(self.g).data();
        let one = T::one();
        sink.add_with(self.f, |i| {
            let t = f[i].tanh();
            grad[i] * sigmoid(g[i]) * (one - t * t)
        });
        sink.add_with(self.g, |i| {
            let s = sigmoid(g[i]);
            grad[i] * f[i].tanh() * s * (one - s)
        });
        Ok(())
    }
}

struct AddChannels {
    x: Var,
    v: Var,
}

impl<T: Scalar> Backward<T> for AddChannels {
    fn backward(&self, tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        sink.add_with(self.x, |i| grad[i]);
        if sink.wants(self.v) {
            let shape = tape.shape(self.x);
            let (n, c) = (shape[0], shape[shape.len() - 1]);
            let inner = grad.len() / (n * c);
            let mut dv = vec![T::zero(); n * c];
            for b in 0..n {
                for p in 0..inner {
                    let base = (b * inner + p) * c;
                    for ch in 0..c {
                        dv[b * c + ch] = dv[b * c + ch] + grad[base + ch];
                    }
                }
            }
            sink.add(self.v, dv);
        }
        Ok(())
    }
}

struct Reduce {
    input: Var,
    scale: bool,
}

impl<T: Scalar> Backward<T> for Reduce {
    fn backward(&self, tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        let n = tape.value(self.input).len();
        let g = if self.scale { grad[0] / T::lit(n as f64) } else { grad[0] };
        sink.add_with(self.input, |_| g);
        Ok(())
    }
}

impl<T: Scalar> Tape<T> {
    fn unary(&mut self, name: &'static str, input: Var, kind: UnaryKind<T>, f: impl Fn(T) -> T) -> Result<Var> {
        self.check(input)?;
        let value = self.value(input).map(f);
        self.push(name, value, &[input], Unary { input, kind })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, UnaryKind::Relu, |v| v.max(T::zero()))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, UnaryKind::Sigmoid, sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary("tanh", x, UnaryKind::Tanh, |v| v.tanh())
    }

    pub fn sin(&mut self, x: Var) -> Result<Var> {
        self.unary("sin", x, UnaryKind::Sin, |v| v.sin())
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        self.unary("scale", x, UnaryKind::Scale(c), move |v| v * c)
    }

    /// Clamp into `[lo, hi]`; clamped elements pass no gradient.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Result<Var> {
        self.unary("clamp", x, UnaryKind::Clamp(lo, hi), move |v| v.max(lo).min(hi))
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, kind: BinaryKind, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push(name, value, &[a, b], Binary { a, b, kind })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, BinaryKind::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, BinaryKind::Sub, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, BinaryKind::Mul, |x, y| x * y)
    }

    /// `tanh(pre_f) ⊙ sigmoid(pre_g)`.
    pub fn gated_unit(&mut self, pre_f: Var, pre_g: Var) -> Result<Var> {
        self.check(pre_f)?;
        self.check(pre_g)?;
        let (f, g) = (self.value(pre_f), self.value(pre_g));
        if f.shape() != g.shape() {
            return Err(shape_err("gated_unit", f.shape(), g.shape()));
        }
        let data = f
            .data()
            .iter()
            .zip(g.data())
            .map(|(&a, &b)| a.tanh() * sigmoid(b))
            .collect();
        let value = Tensor::new(f.shape().to_vec(), data)?;
        self.push("gated_unit", value, &[pre_f, pre_g], Gated { f: pre_f, g: pre_g })
    }

    /// `x[n, .., c] + v[n, c]`, broadcasting `v` over every middle axis of `x`.
    pub fn add_channels(&mut self, x: Var, v: Var) -> Result<Var> {
        self.check(x)?;
        self.check(v)?;
        let (xs, vs) = (self.shape(x), self.shape(v));
        if xs.len() < 2 || vs.len() != 2 || vs[0] != xs[0] || vs[1] != xs[xs.len() - 1] {
            return Err(shape_err("add_channels", xs, vs));
        }
        let (n, c) = (vs[0], vs[1]);
        let xv = self.value(x);
        let vv = self.value(v).data();
        let inner = xv.len() / (n * c);
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &a)| a + vv[(i / (inner * c)) * c + i % c])
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("add_channels", value, &[x, v], AddChannels { x, v })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = Tensor::scalar(self.value(x).sum());
        self.push("sum", value, &[x], Reduce { input: x, scale: false })
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let v = self.value(x);
        let value = Tensor::scalar(v.sum() / T::lit(v.len() as f64));
        self.push("mean", value, &[x], Reduce { input: x, scale: true })
    }
}
