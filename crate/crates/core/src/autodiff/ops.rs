use super::graph::Op;
use super::kernels::{for_each_reduced, mm_nn, split_axis};
use super::{Tape, Tensor, TensorError, Var};

fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Copy of the node's current value.
    pub fn value(&self) -> Tensor {
        self.tape.nodes()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes()[self.id].requires_grad
    }

    /// Scalar value of a single-element node.
    pub fn item(&self) -> f64 {
        self.tape.nodes()[self.id].value.item()
    }

    fn unary(self, op: Op, f: impl Fn(&Tensor) -> Tensor) -> Var<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let n = &nodes[self.id];
            (f(&n.value), n.requires_grad)
        };
        self.tape.push(value, op, rg)
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands live on different tapes"
        );
    }

    /// Matrix product over the last two axes. The right operand is either
    /// two-dimensional (shared by every batch entry) or has exactly the same
    /// leading batch axes as `self`.
    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&rhs);
        let (value, shared, rg) = {
            let nodes = self.tape.nodes();
            let (a, b) = (&nodes[self.id].value, &nodes[rhs.id].value);
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() < 2 || sb.len() < 2 {
                return Err(mismatch("matmul", sa, sb));
            }
            let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
            let (k2, p) = (sb[sb.len() - 2], sb[sb.len() - 1]);
            let shared = sb.len() == 2;
            if k != k2 || (!shared && sa[..sa.len() - 2] != sb[..sb.len() - 2]) {
                return Err(mismatch("matmul", sa, sb));
            }
            let batch = a.numel() / (m * k).max(1);
            let mut out = vec![0.0; batch * m * p];
            for bi in 0..batch {
                let boff = if shared { 0 } else { bi * k * p };
                mm_nn(
                    &a.data()[bi * m * k..(bi + 1) * m * k],
                    &b.data()[boff..boff + k * p],
                    &mut out[bi * m * p..(bi + 1) * m * p],
                    m,
                    k,
                    p,
                );
            }
            let mut shape = sa[..sa.len() - 2].to_vec();
            shape.extend([m, p]);
            let rg = nodes[self.id].requires_grad || nodes[rhs.id].requires_grad;
            (Tensor::new(shape, out)?, shared, rg)
        };
        Ok(self.tape.push(
            value,
            Op::MatMul {
                a: self.id,
                b: rhs.id,
                shared_rhs: shared,
            },
            rg,
        ))
    }

    fn binary(
        self,
        rhs: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>, TensorError> {
        self.same_tape(&rhs);
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let (a, b) = (&nodes[self.id].value, &nodes[rhs.id].value);
            let value = if a.shape() == b.shape() {
                let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
                Tensor::new(a.shape().to_vec(), data)?
            } else if b.numel() == 1 {
                let y = b.data()[0];
                a.map(|x| f(x, y))
            } else if a.numel() == 1 {
                let x = a.data()[0];
                b.map(|y| f(x, y))
            } else {
                return Err(mismatch(name, a.shape(), b.shape()));
            };
            (value, nodes[self.id].requires_grad || nodes[rhs.id].requires_grad)
        };
        Ok(self.tape.push(value, op, rg))
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        let op = Op::Add { a: self.id, b: rhs.id };
        self.binary(rhs, "add", op, |x, y| x + y)
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        let op = Op::Sub { a: self.id, b: rhs.id };
        self.binary(rhs, "sub", op, |x, y| x - y)
    }

    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        let op = Op::Mul { a: self.id, b: rhs.id };
        self.binary(rhs, "mul", op, |x, y| x * y)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale { a: self.id, c }, |t| t.map(|x| c * x))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh { a: self.id }, |t| t.map(f64::tanh))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid { a: self.id }, |t| {
            t.map(|x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            })
        })
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu { a: self.id }, |t| t.map(|x| x.max(0.0)))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp { a: self.id }, |t| t.map(f64::exp))
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Op::Square { a: self.id }, |t| t.map(|x| x * x))
    }

    /// Softmax over the last axis, computed with max subtraction.
    pub fn softmax_lastdim(self) -> Result<Var<'t>, TensorError> {
        let shape = self.shape();
        match shape.last() {
            Some(&c) if c >= 1 => {}
            _ => return Err(TensorError::EmptyInput("softmax_lastdim")),
        }
        Ok(self.unary(Op::Softmax { a: self.id }, |t| {
            let cols = *t.shape().last().unwrap();
            let mut out = t.clone();
            for row in out.data_mut().chunks_mut(cols) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                for x in row.iter_mut() {
                    *x /= sum;
                }
            }
            out
        }))
    }

    fn reduce_axes(&self, axes: &[usize]) -> Result<(Vec<usize>, Vec<usize>, usize), TensorError> {
        let shape = self.shape();
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if let Some(&bad) = axes.iter().find(|&&a| a >= shape.len()) {
            return Err(TensorError::InvalidAxis {
                axis: bad,
                ndim: shape.len(),
            });
        }
        let out_shape = shape
            .iter()
            .enumerate()
            .filter(|(i, _)| !axes.contains(i))
            .map(|(_, &d)| d)
            .collect();
        let count = axes.iter().map(|&a| shape[a]).product();
        Ok((axes, out_shape, count))
    }

    fn reduce(self, axes: &[usize], mean: bool) -> Result<Var<'t>, TensorError> {
        let (axes, out_shape, count) = self.reduce_axes(axes)?;
        if mean && count == 0 {
            return Err(TensorError::EmptyReduction);
        }
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let x = &nodes[self.id].value;
            let n_out: usize = out_shape.iter().product();
            let mut out = vec![0.0; n_out];
            for_each_reduced(x.shape(), &axes, |i, o| out[o] += x.data()[i]);
            if mean {
                let inv = 1.0 / count as f64;
                out.iter_mut().for_each(|v| *v *= inv);
            }
            (Tensor::new(out_shape, out)?, nodes[self.id].requires_grad)
        };
        let op = if mean {
            Op::Mean { a: self.id, axes, count }
        } else {
            Op::Sum { a: self.id, axes }
        };
        Ok(self.tape.push(value, op, rg))
    }

    pub fn sum(self, axes: &[usize]) -> Result<Var<'t>, TensorError> {
        self.reduce(axes, false)
    }

    pub fn mean(self, axes: &[usize]) -> Result<Var<'t>, TensorError> {
        self.reduce(axes, true)
    }

    pub fn sum_all(self) -> Var<'t> {
        let axes: Vec<usize> = (0..self.shape().len()).collect();
        self.reduce(&axes, false).expect("all axes are valid")
    }

    pub fn mean_all(self) -> Result<Var<'t>, TensorError> {
        let axes: Vec<usize> = (0..self.shape().len()).collect();
        self.reduce(&axes, true)
    }

    fn check_axis(&self, axis: usize, ndim: usize) -> Result<(), TensorError> {
        if axis >= ndim {
            Err(TensorError::InvalidAxis { axis, ndim })
        } else {
            Ok(())
        }
    }

    /// Contiguous range `start..start+len` along `axis`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>, TensorError> {
        let shape = self.shape();
        self.check_axis(axis, shape.len())?;
        if start + len > shape[axis] {
            return Err(TensorError::OutOfRange {
                axis,
                index: start + len,
                dim: shape[axis],
            });
        }
        Ok(self.unary(Op::Slice { a: self.id, axis, start, len }, |t| {
            let (outer, dim, inner) = split_axis(t.shape(), axis);
            let mut out = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                out.extend_from_slice(&t.data()[(o * dim + start) * inner..(o * dim + start + len) * inner]);
            }
            let mut s = t.shape().to_vec();
            s[axis] = len;
            Tensor::new(s, out).expect("slice shape")
        }))
    }

    /// Entry `index` along `axis`, with that axis removed.
    pub fn select(self, axis: usize, index: usize) -> Result<Var<'t>, TensorError> {
        let shape = self.shape();
        self.check_axis(axis, shape.len())?;
        if index >= shape[axis] {
            return Err(TensorError::OutOfRange {
                axis,
                index,
                dim: shape[axis],
            });
        }
        Ok(self.unary(Op::Select { a: self.id, axis, index }, |t| {
            let (outer, dim, inner) = split_axis(t.shape(), axis);
            let mut out = Vec::with_capacity(outer * inner);
            for o in 0..outer {
                out.extend_from_slice(&t.data()[(o * dim + index) * inner..(o * dim + index + 1) * inner]);
            }
            let mut s = t.shape().to_vec();
            s.remove(axis);
            Tensor::new(s, out).expect("select shape")
        }))
    }

    pub fn transpose_last2(self) -> Result<Var<'t>, TensorError> {
        let shape = self.shape();
        if shape.len() < 2 {
            return Err(TensorError::InvalidAxis { axis: 1, ndim: shape.len() });
        }
        Ok(self.unary(Op::Transpose { a: self.id }, |t| {
            let nd = t.ndim();
            let (r, c) = (t.shape()[nd - 2], t.shape()[nd - 1]);
            let mut out = vec![0.0; t.numel()];
            for (bo, bi) in out.chunks_mut((r * c).max(1)).zip(t.data().chunks((r * c).max(1))) {
                for i in 0..r {
                    for j in 0..c {
                        bo[j * r + i] = bi[i * c + j];
                    }
                }
            }
            let mut s = t.shape().to_vec();
            s.swap(nd - 2, nd - 1);
            Tensor::new(s, out).expect("transpose shape")
        }))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, TensorError> {
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let n = &nodes[self.id];
            (n.value.reshape(shape)?, n.requires_grad)
        };
        Ok(self.tape.push(value, Op::Reshape { a: self.id }, rg))
    }

    /// Repeats the tensor over new leading axes `lead`, producing shape
    /// `lead ++ self.shape`. This is the only non-scalar broadcast the
    /// engine offers, and it is always explicit.
    pub fn expand_leading(self, lead: &[usize]) -> Var<'t> {
        let reps: usize = lead.iter().product();
        self.unary(Op::Expand { a: self.id, reps }, |t| {
            let mut shape = lead.to_vec();
            shape.extend_from_slice(t.shape());
            let mut data = Vec::with_capacity(reps * t.numel());
            for _ in 0..reps {
                data.extend_from_slice(t.data());
            }
            Tensor::new(shape, data).expect("expand shape")
        })
    }

    /// Per-row standardization over the last axis (no affine terms).
    pub fn layer_norm_lastdim(self, eps: f64) -> Result<Var<'t>, TensorError> {
        let (value, inv_std, rg) = {
            let nodes = self.tape.nodes();
            let n = &nodes[self.id];
            let cols = match n.value.shape().last() {
                Some(&c) if c > 0 => c,
                _ => return Err(TensorError::EmptyInput("layer_norm_lastdim")),
            };
            let mut out = n.value.clone();
            let mut inv_std = Vec::with_capacity(out.numel() / cols);
            for row in out.data_mut().chunks_mut(cols) {
                let mean = row.iter().sum::<f64>() / cols as f64;
                let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
                let is = 1.0 / (var + eps).sqrt();
                row.iter_mut().for_each(|x| *x = (*x - mean) * is);
                inv_std.push(is);
            }
            (out, inv_std, n.requires_grad)
        };
        Ok(self.tape.push(value, Op::LayerNorm { a: self.id, inv_std }, rg))
    }

    /// Replaces entries above the diagonal of the trailing square matrices
    /// with a large negative number, so a following softmax ignores them.
    pub fn causal_mask(self) -> Result<Var<'t>, TensorError> {
        let shape = self.shape();
        let nd = shape.len();
        if nd < 2 || shape[nd - 1] != shape[nd - 2] {
            return Err(mismatch("causal_mask", &shape, &shape));
        }
        Ok(self.unary(Op::CausalMask { a: self.id }, |t| {
            let n = t.shape()[t.ndim() - 1];
            let mut out = t.clone();
            for block in out.data_mut().chunks_mut((n * n).max(1)) {
                for i in 0..n {
                    for j in i + 1..n {
                        block[i * n + j] = -1e30;
                    }
                }
            }
            out
        }))
    }
}

/// Concatenation along an existing axis.
pub fn concat<'t>(vars: &[Var<'t>], axis: usize) -> Result<Var<'t>, TensorError> {
    let first = vars.first().ok_or(TensorError::EmptyInput("concat"))?;
    let tape = first.tape;
    let (value, rg) = {
        let nodes = tape.nodes();
        let s0 = nodes[first.id].value.shape();
        if axis >= s0.len() {
            return Err(TensorError::InvalidAxis { axis, ndim: s0.len() });
        }
        let mut total = 0;
        for v in vars {
            first.same_tape(v);
            let s = nodes[v.id].value.shape();
            let compatible = s.len() == s0.len()
                && s.iter().zip(s0).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(mismatch("concat", s0, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(s0, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in vars {
                let t = &nodes[v.id].value;
                let dim = t.shape()[axis];
                out.extend_from_slice(&t.data()[o * dim * inner..(o + 1) * dim * inner]);
            }
        }
        let mut shape = s0.to_vec();
        shape[axis] = total;
        let rg = vars.iter().any(|v| nodes[v.id].requires_grad);
        (Tensor::new(shape, out)?, rg)
    };
    let inputs = vars.iter().map(|v| v.id).collect();
    Ok(tape.push(value, Op::Concat { inputs, axis }, rg))
}

/// Stacks equal-shaped tensors along a new axis at position `axis`.
pub fn stack<'t>(vars: &[Var<'t>], axis: usize) -> Result<Var<'t>, TensorError> {
    let first = vars.first().ok_or(TensorError::EmptyInput("stack"))?;
    let tape = first.tape;
    let (value, rg) = {
        let nodes = tape.nodes();
        let s0 = nodes[first.id].value.shape();
        if axis > s0.len() {
            return Err(TensorError::InvalidAxis { axis, ndim: s0.len() + 1 });
        }
        for v in vars {
            first.same_tape(v);
            let s = nodes[v.id].value.shape();
            if s != s0 {
                return Err(mismatch("stack", s0, s));
            }
        }
        let outer: usize = s0[..axis].iter().product();
        let inner: usize = s0[axis..].iter().product();
        let mut out = Vec::with_capacity(outer * vars.len() * inner);
        for o in 0..outer {
            for v in vars {
                out.extend_from_slice(&nodes[v.id].value.data()[o * inner..(o + 1) * inner]);
            }
        }
        let mut shape = s0[..axis].to_vec();
        shape.push(vars.len());
        shape.extend_from_slice(&s0[axis..]);
        let rg = vars.iter().any(|v| nodes[v.id].requires_grad);
        (Tensor::new(shape, out)?, rg)
    };
    let inputs = vars.iter().map(|v| v.id).collect();
    Ok(tape.push(value, Op::Stack { inputs, axis }, rg))
}
