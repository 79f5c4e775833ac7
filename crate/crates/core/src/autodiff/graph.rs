use std::cell::{Cell, Ref, RefCell};
use std::fmt;

use super::kernels::{for_each_reduced, mm_nt, mm_tn, split_axis};
use super::{Tensor, TensorError};

/// Recorded operation of a tape node. Input handles always refer to earlier
/// nodes, so a reverse sweep over the node list is a valid topological order.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    MatMul { a: usize, b: usize, shared_rhs: bool },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, c: f64 },
    Tanh { a: usize },
    Sigmoid { a: usize },
    Relu { a: usize },
    Exp { a: usize },
    Square { a: usize },
    Softmax { a: usize },
    Sum { a: usize, axes: Vec<usize> },
    Mean { a: usize, axes: Vec<usize>, count: usize },
    Concat { inputs: Vec<usize>, axis: usize },
    Stack { inputs: Vec<usize>, axis: usize },
    Slice { a: usize, axis: usize, start: usize, len: usize },
    Select { a: usize, axis: usize, index: usize },
    Transpose { a: usize },
    Reshape { a: usize },
    Expand { a: usize, reps: usize },
    LayerNorm { a: usize, inv_std: Vec<f64> },
    CausalMask { a: usize },
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Append-only record of a define-by-run forward pass.
///
/// A tape is single-threaded; build one per forward pass (or per worker) and
/// drop it afterwards.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    fault: Cell<bool>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{}, shape {:?})", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Leaf node; gradients are collected for it when `requires_grad`.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
    }

    /// Test hook: when set, the backward rule of `tanh` is deliberately wrong.
    /// Used as a negative control for gradient verification.
    pub fn set_fault_injection(&self, on: bool) {
        self.fault.set(on);
    }

    pub(crate) fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn nodes(&self) -> Ref<'_, Vec<Node>> {
        self.nodes.borrow()
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Gradients accumulate across fan-out. A loss that does not depend on
    /// any `requires_grad` leaf yields an empty gradient map.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, TensorError> {
        let nodes = self.nodes.borrow();
        if nodes.is_empty() || loss.id >= nodes.len() || !std::ptr::eq(loss.tape, self) {
            return Err(TensorError::EmptyGraph);
        }
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        if !root.requires_grad {
            return Ok(Gradients {
                grads: Vec::new(),
                leaf: Vec::new(),
            });
        }
        grads[loss.id] = Some(vec![1.0]);
        let fault = self.fault.get();
        for i in (0..=loss.id).rev() {
            let (before, rest) = grads.split_at_mut(i);
            let Some(g) = rest[0].as_ref() else { continue };
            let node = &nodes[i];
            propagate(&nodes, node, g, before, fault);
        }
        let leaf = nodes[..=loss.id]
            .iter()
            .map(|n| matches!(n.op, Op::Leaf) && n.requires_grad)
            .collect();
        let grads = grads
            .into_iter()
            .zip(nodes.iter())
            .map(|(g, n)| {
                g.map(|data| Tensor::new(n.value.shape().to_vec(), data).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { grads, leaf })
    }
}

/// Gradient map produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    leaf: Vec<bool>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if `var` was reached.
    pub fn wrt(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient with respect to `var`, or zeros when `var` was not reached.
    pub fn wrt_or_zero(&self, var: Var<'_>) -> Tensor {
        self.wrt(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&var.shape()))
    }

    /// Number of `requires_grad` leaves that received a gradient.
    pub fn len(&self) -> usize {
        self.grads
            .iter()
            .zip(&self.leaf)
            .filter(|(g, &l)| l && g.is_some())
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn acc<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], id: usize) -> Option<&'g mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    let len = nodes[id].value.numel();
    Some(grads[id].get_or_insert_with(|| vec![0.0; len]))
}

/// Accumulates `g` (the gradient of `node`) into the gradients of its inputs.
fn propagate(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>], fault: bool) {
    let y = node.value.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b, shared_rhs } => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let nd = av.ndim();
            let (m, k) = (av.shape()[nd - 2], av.shape()[nd - 1]);
            let p = bv.shape()[bv.ndim() - 1];
            let batch = av.numel() / (m * k);
            if let Some(da) = acc(grads, nodes, *a) {
                for bi in 0..batch {
                    let boff = if *shared_rhs { 0 } else { bi * k * p };
                    mm_nt(
                        &g[bi * m * p..(bi + 1) * m * p],
                        &bv.data()[boff..boff + k * p],
                        &mut da[bi * m * k..(bi + 1) * m * k],
                        m,
                        k,
                        p,
                    );
                }
            }
            if let Some(db) = acc(grads, nodes, *b) {
                for bi in 0..batch {
                    let boff = if *shared_rhs { 0 } else { bi * k * p };
                    mm_tn(
                        &av.data()[bi * m * k..(bi + 1) * m * k],
                        &g[bi * m * p..(bi + 1) * m * p],
                        &mut db[boff..boff + k * p],
                        m,
                        k,
                        p,
                    );
                }
            }
        }
        Op::Add { a, b } | Op::Sub { a, b } => {
            let sign = if matches!(node.op, Op::Sub { .. }) { -1.0 } else { 1.0 };
            for (id, s) in [(*a, 1.0), (*b, sign)] {
                if let Some(d) = acc(grads, nodes, id) {
                    if d.len() == g.len() {
                        d.iter_mut().zip(g).for_each(|(d, gi)| *d += s * gi);
                    } else {
                        d[0] += s * g.iter().sum::<f64>();
                    }
                }
            }
        }
        Op::Mul { a, b } => {
            for (id, other) in [(*a, *b), (*b, *a)] {
                let ov = nodes[other].value.data();
                if let Some(d) = acc(grads, nodes, id) {
                    if d.len() == g.len() {
                        if ov.len() == g.len() {
                            for ((d, gi), o) in d.iter_mut().zip(g).zip(ov) {
                                *d += gi * o;
                            }
                        } else {
                            d.iter_mut().zip(g).for_each(|(d, gi)| *d += gi * ov[0]);
                        }
                    } else {
                        let s: f64 = if ov.len() == g.len() {
                            g.iter().zip(ov).map(|(gi, o)| gi * o).sum()
                        } else {
                            g.iter().sum::<f64>() * ov[0]
                        };
                        d[0] += s;
                    }
                }
            }
        }
        Op::Scale { a, c } => {
            if let Some(d) = acc(grads, nodes, *a) {
                d.iter_mut().zip(g).for_each(|(d, gi)| *d += c * gi);
            }
        }
        Op::Tanh { a } => {
            if let Some(d) = acc(grads, nodes, *a) {
                for ((d, gi), yi) in d.iter_mut().zip(g).zip(y) {
                    let slope = if fault { 1.0 - yi } else { 1.0 - yi * yi };
                    *d += gi * slope;
                }
            }
        }
        Op::Sigmoid { a } => {
            if let Some(d) = acc(grads, nodes, *a) {
                for ((d, gi), yi) in d.iter_mut().zip(g).zip(y) {
                    *d += gi * yi * (1.0 - yi);
                }
            }
        }
        Op::Relu { a } => {
            let x = nodes[*a].value.data();
            if let Some(d) = acc(grads, nodes, *a) {
                for ((d, gi), xi) in d.iter_mut().zip(g).zip(x) {
                    if *xi > 0.0 {
                        *d += gi;
                    }
                }
            }
        }
        Op::Exp { a } => {
            if let Some(d) = acc(grads, nodes, *a) {
                for ((d, gi), yi) in d.iter_mut().zip(g).zip(y) {
                    *d += gi * yi;
                }
            }
        }
        Op::Square { a } => {
            let x = nodes[*a].value.data();
            if let Some(d) = acc(grads, nodes, *a) {
                for ((d, gi), xi) in d.iter_mut().zip(g).zip(x) {
                    *d += 2.0 * xi * gi;
                }
            }
        }
        Op::Softmax { a } => {
            let cols = *node.value.shape().last().unwrap();
            if let Some(d) = acc(grads, nodes, *a) {
                for ((dr, gr), yr) in d
                    .chunks_mut(cols)
                    .zip(g.chunks(cols))
                    .zip(y.chunks(cols))
                {
                    let dot: f64 = gr.iter().zip(yr).map(|(gi, yi)| gi * yi).sum();
                    for ((d, gi), yi) in dr.iter_mut().zip(gr).zip(yr) {
                        *d += yi * (gi - dot);
                    }
                }
            }
        }
        Op::Sum { a, axes } => {
            let shape = nodes[*a].value.shape().to_vec();
            if let Some(d) = acc(grads, nodes, *a) {
                for_each_reduced(&shape, axes, |i, o| d[i] += g[o]);
            }
        }
        Op::Mean { a, axes, count } => {
            let shape = nodes[*a].value.shape().to_vec();
            let inv = 1.0 / *count as f64;
            if let Some(d) = acc(grads, nodes, *a) {
                for_each_reduced(&shape, axes, |i, o| d[i] += g[o] * inv);
            }
        }
        Op::Concat { inputs, axis } => {
            let (outer, total, inner) = split_axis(node.value.shape(), *axis);
            let mut offset = 0;
            for &id in inputs {
                let dim = nodes[id].value.shape()[*axis];
                if let Some(d) = acc(grads, nodes, id) {
                    for o in 0..outer {
                        let src = &g[(o * total + offset) * inner..(o * total + offset + dim) * inner];
                        let dst = &mut d[o * dim * inner..(o + 1) * dim * inner];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                    }
                }
                offset += dim;
            }
        }
        Op::Stack { inputs, axis } => {
            let in_shape = nodes[inputs[0]].value.shape();
            let outer: usize = in_shape[..*axis].iter().product();
            let inner: usize = in_shape[*axis..].iter().product();
            let count = inputs.len();
            for (j, &id) in inputs.iter().enumerate() {
                if let Some(d) = acc(grads, nodes, id) {
                    for o in 0..outer {
                        let src = &g[(o * count + j) * inner..(o * count + j + 1) * inner];
                        let dst = &mut d[o * inner..(o + 1) * inner];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                    }
                }
            }
        }
        Op::Slice { a, axis, start, len } => {
            let (outer, dim, inner) = split_axis(nodes[*a].value.shape(), *axis);
            if let Some(d) = acc(grads, nodes, *a) {
                for o in 0..outer {
                    let src = &g[o * len * inner..(o + 1) * len * inner];
                    let dst = &mut d[(o * dim + start) * inner..(o * dim + start + len) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                }
            }
        }
        Op::Select { a, axis, index } => {
            let (outer, dim, inner) = split_axis(nodes[*a].value.shape(), *axis);
            if let Some(d) = acc(grads, nodes, *a) {
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    let dst = &mut d[(o * dim + index) * inner..(o * dim + index + 1) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                }
            }
        }
        Op::Transpose { a } => {
            let shape = nodes[*a].value.shape();
            let nd = shape.len();
            let (r, c) = (shape[nd - 2], shape[nd - 1]);
            if let Some(d) = acc(grads, nodes, *a) {
                for (bd, bg) in d.chunks_mut(r * c).zip(g.chunks(r * c)) {
                    for i in 0..r {
                        for j in 0..c {
                            bd[i * c + j] += bg[j * r + i];
                        }
                    }
                }
            }
        }
        Op::Reshape { a } => {
            if let Some(d) = acc(grads, nodes, *a) {
                d.iter_mut().zip(g).for_each(|(d, s)| *d += s);
            }
        }
        Op::Expand { a, reps } => {
            if let Some(d) = acc(grads, nodes, *a) {
                let n = d.len();
                for r in 0..*reps {
                    d.iter_mut()
                        .zip(&g[r * n..(r + 1) * n])
                        .for_each(|(d, s)| *d += s);
                }
            }
        }
        Op::LayerNorm { a, inv_std } => {
            let cols = *node.value.shape().last().unwrap();
            if let Some(d) = acc(grads, nodes, *a) {
                for (((dr, gr), yr), is) in d
                    .chunks_mut(cols)
                    .zip(g.chunks(cols))
                    .zip(y.chunks(cols))
                    .zip(inv_std)
                {
                    let n = cols as f64;
                    let g_mean = gr.iter().sum::<f64>() / n;
                    let gy_mean = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                    for ((d, gi), yi) in dr.iter_mut().zip(gr).zip(yr) {
                        *d += is * (gi - g_mean - yi * gy_mean);
                    }
                }
            }
        }
        Op::CausalMask { a } => {
            let shape = node.value.shape();
            let n = shape[shape.len() - 1];
            if let Some(d) = acc(grads, nodes, *a) {
                for (bd, bg) in d.chunks_mut(n * n).zip(g.chunks(n * n)) {
                    for i in 0..n {
                        for j in 0..=i {
                            bd[i * n + j] += bg[i * n + j];
                        }
                    }
                }
            }
        }
    }
}
