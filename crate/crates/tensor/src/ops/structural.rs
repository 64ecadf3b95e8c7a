use crate::error::{shape_err, Result, TensorError};
use crate::scalar::{gemm, Scalar, Trans};
use crate::tape::{Backward, GradSink, Tape, Var};
use crate::tensor::Tensor;

struct Passthrough {
    input: Var,
}

impl<T: Scalar> Backward<T> for Passthrough {
    fn backward(&self, _tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        sink.add_with(self.input, |i| grad[i]);
        Ok(())
    }
}

struct MatMul {
    a: Var,
    b: Var,
}

impl<T: Scalar> Backward<T> for MatMul {
    fn backward(&self, tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        let (a, b) = (tape.value(self.a), tape.value(self.b));
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        if sink.wants(self.a) {
            let mut da = vec![T::zero(); m * k];
            gemm(m, n, k, grad, Trans::No, b.data(), Trans::Yes, &mut da, false);
            sink.add(self.a, da);
        }
        if sink.wants(self.b) {
            let mut db = vec![T::zero(); k * n];
            gemm(k, m, n, a.data(), Trans::Yes, grad, Trans::No, &mut db, false);
            sink.add(self.b, db);
        }
        Ok(())
    }
}

struct Embedding {
    table: Var,
    ids: Vec<Option<usize>>,
}

impl<T: Scalar> Backward<T> for Embedding {
    fn backward(&self, tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        if !sink.wants(self.table) {
            return Ok(());
        }
        let table = tape.value(self.table);
        let d = table.last_dim();
        let mut dt = vec![T::zero(); table.len()];
        for (row, id) in self.ids.iter().enumerate() {
            if let Some(id) = *id {
                for j in 0..d {
                    dt[id * d + j] = dt[id * d + j] + grad[row * d + j];
                }
            }
        }
        sink.add(self.table, dt);
        Ok(())
    }
}

struct ConcatLast {
    inputs: Vec<Var>,
}

impl<T: Scalar> Backward<T> for ConcatLast {
    fn backward(&self, tape: &Tape<T>, out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        let total = tape.value(out).last_dim();
        let mut offset = 0;
        for &v in &self.inputs {
            let w = tape.value(v).last_dim();
            sink.add_with(v, |i| grad[(i / w) * total + offset + i % w]);
            offset += w;
        }
        Ok(())
    }
}

struct SliceLast {
    input: Var,
    start: usize,
    len: usize,
}

impl<T: Scalar> Backward<T> for SliceLast {
    fn backward(&self, tape: &Tape<T>, _out: Var, grad: &[T], sink: &mut GradSink<'_, T>) -> Result<()> {
        let c = tape.value(self.input).last_dim();
        let (start, len) = (self.start, self.len);
        sink.add_with(self.input, |i| {
            let ch = i % c;
            if ch >= start && ch < start + len {
                grad[(i / c) * len + ch - start]
            } else {
                T::zero()
            }
        });
        Ok(())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).clone().reshape(shape)?;
        self.push("reshape", value, &[x], Passthrough { input: x })
    }

    /// Forward value of `e`, gradient routed to `z` unchanged (straight-through estimator).
    pub fn straight_through(&mut self, z: Var, e: Var) -> Result<Var> {
        self.check(z)?;
        self.check(e)?;
        if self.shape(z) != self.shape(e) {
            return Err(shape_err("straight_through", self.shape(z), self.shape(e)));
        }
        let value = self.value(e).clone();
        self.push("straight_through", value, &[z], Passthrough { input: z })
    }

    /// `[m, k] · [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(shape_err("matmul", av.shape(), bv.shape()));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, av.data(), Trans::No, bv.data(), Trans::No, &mut out, false);
        let value = Tensor::new(vec![m, n], out)?;
        self.push("matmul", value, &[a, b], MatMul { a, b })
    }

    /// Rows of `table` (`[vocab, d]`) gathered by `ids`; output shape is `lead ++ [d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], lead: &[usize]) -> Result<Var> {
        let ids: Vec<Option<usize>> = ids.iter().copied().map(Some).collect();
        self.embedding_or_zero(table, &ids, lead)
    }

    /// Like [`embedding`](Self::embedding); `None` ids produce zero rows with no gradient.
    pub fn embedding_or_zero(&mut self, table: Var, ids: &[Option<usize>], lead: &[usize]) -> Result<Var> {
        self.check(table)?;
        let tv = self.value(table);
        if tv.rank() != 2 || lead.iter().product::<usize>() != ids.len() {
            return Err(shape_err("embedding", tv.shape(), lead));
        }
        let (vocab, d) = (tv.shape()[0], tv.shape()[1]);
        let mut out = vec![T::zero(); ids.len() * d];
        for (row, id) in ids.iter().enumerate() {
            if let Some(id) = *id {
                if id >= vocab {
                    return Err(TensorError::Index {
                        op: "embedding",
                        index: id,
                        size: vocab,
                    });
                }
                out[row * d..(row + 1) * d].copy_from_slice(&tv.data()[id * d..(id + 1) * d]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(d);
        let value = Tensor::new(shape, out)?;
        self.push("embedding", value, &[table], Embedding { table, ids: ids.to_vec() })
    }

    /// Concatenate along the last axis; leading dims must agree.
    pub fn concat_last(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| TensorError::Contract("concat_last of nothing".into()))?;
        for &v in inputs {
            self.check(v)?;
        }
        let lead = self.shape(first)[..self.shape(first).len() - 1].to_vec();
        for &v in inputs {
            let s = self.shape(v);
            if s[..s.len() - 1] != lead[..] {
                return Err(shape_err("concat_last", self.shape(first), s));
            }
        }
        let widths: Vec<usize> = inputs.iter().map(|&v| self.value(v).last_dim()).collect();
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&v, &w) in inputs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(v).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        self.push("concat_last", value, inputs, ConcatLast { inputs: inputs.to_vec() })
    }

    /// Channels `start..start+len` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(x)?;
        let xv = self.value(x);
        let c = xv.last_dim();
        if len == 0 || start + len > c {
            return Err(TensorError::Index {
                op: "slice_last",
                index: start + len,
                size: c,
            });
        }
        let rows = xv.len() / c;
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xv.data()[r * c + start..r * c + start + len]);
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let value = Tensor::new(shape, out)?;
        self.push("slice_last", value, &[x], SliceLast { input: x, start, len })
    }
}
