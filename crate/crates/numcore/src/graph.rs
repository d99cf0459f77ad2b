//! Computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in topological order and evaluated eagerly, so values
//! are available as the graph is built. `forward` re-evaluates everything
//! from the current leaf bindings (used by finite-difference checks after
//! `rebind_leaf`). `backward` walks the nodes once in reverse order and
//! returns a gradient per named trainable leaf.
//!
//! All reductions run in a fixed order: the same graph with the same leaf
//! values is bitwise reproducible.

use std::collections::BTreeMap;

use crate::error::{NumError, Result};
use crate::tensor::Tensor;

pub type NodeId = usize;

/// Gradients keyed by leaf name, in name order.
pub type Gradients = BTreeMap<String, Tensor>;

#[derive(Debug, Clone)]
enum Op {
    Leaf { name: Option<String>, trainable: bool },
    /// [m,k] x [k,n] -> [m,n]
    MatMul(NodeId, NodeId),
    /// [m,k] x [k] -> [m]
    MatVec(NodeId, NodeId),
    /// rows of [l,m] weighted by [l] -> [m]
    RowsWeighted(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// [l,m] + row vector [m] broadcast over rows
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// scale * x + shift, elementwise with constants
    Affine { x: NodeId, scale: f64, shift: f64 },
    Sigmoid(NodeId),
    Tanh(NodeId),
    /// stable softmax over a rank-1 tensor
    Softmax(NodeId),
    LogSoftmax(NodeId),
    /// x[index] -> [1]
    Pick { x: NodeId, index: usize },
    /// m[index,:] -> [cols]
    Row { m: NodeId, index: usize },
    Concat(Vec<NodeId>),
    /// stack rank-1 tensors of equal length into a matrix
    Stack(Vec<NodeId>),
    Sum(NodeId),
    Dot(NodeId, NodeId),
    /// v - s with s scalar, broadcast
    SubScalar(NodeId, NodeId),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    /// False after a leaf rebind until `forward` runs again.
    fresh: bool,
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            fresh: true,
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        Graph {
            nodes: Vec::with_capacity(n),
            fresh: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    /// Named leaf; `trainable` leaves receive gradients from `backward`.
    pub fn leaf(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> NodeId {
        self.push_value(
            Op::Leaf {
                name: Some(name.into()),
                trainable,
            },
            value,
        )
    }

    /// Unnamed constant input.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_value(
            Op::Leaf {
                name: None,
                trainable: false,
            },
            value,
        )
    }

    /// Replace a leaf value (same shape). Marks the graph stale until `forward`.
    pub fn rebind_leaf(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        match &self.nodes[id].op {
            Op::Leaf { .. } => {
                if self.nodes[id].value.shape() != value.shape() {
                    return Err(NumError::ShapeMismatch {
                        op: "rebind_leaf",
                        lhs: self.nodes[id].value.shape().to_vec(),
                        rhs: value.shape().to_vec(),
                    });
                }
                self.nodes[id].value = value;
                self.fresh = false;
                Ok(())
            }
            _ => Err(NumError::NotALeaf(id)),
        }
    }

    /// Re-evaluate every non-leaf node in order and return the output value.
    pub fn forward(&mut self, output: NodeId) -> Result<Tensor> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf { .. }) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            self.nodes[i].value = self.eval(&op)?;
        }
        self.fresh = true;
        Ok(self.nodes[output].value.clone())
    }

    fn push_value(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let value = self.eval(&op)?;
        Ok(self.push_value(op, value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }

    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        self.push(Op::MatVec(m, v))
    }

    /// Weighted sum of matrix rows: `sum_j w[j] * m[j,:]`.
    pub fn rows_weighted(&mut self, m: NodeId, w: NodeId) -> Result<NodeId> {
        self.push(Op::RowsWeighted(m, w))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn add_row(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        self.push(Op::AddRow(m, v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        self.push(Op::Affine { x, scale, shift })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let nb = self.affine(b, -1.0, 0.0)?;
        self.add(a, nb)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Tanh(x))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Softmax(x))
    }

    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::LogSoftmax(x))
    }

    pub fn pick(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        self.push(Op::Pick { x, index })
    }

    pub fn row(&mut self, m: NodeId, index: usize) -> Result<NodeId> {
        self.push(Op::Row { m, index })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.push(Op::Concat(parts.to_vec()))
    }

    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        self.push(Op::Stack(rows.to_vec()))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(x))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Dot(a, b))
    }

    pub fn sub_scalar(&mut self, v: NodeId, s: NodeId) -> Result<NodeId> {
        self.push(Op::SubScalar(v, s))
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        self.mul(x, x)
    }

    fn val(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn eval(&self, op: &Op) -> Result<Tensor> {
        let out = match op {
            Op::Leaf { .. } => unreachable!("leaves are never re-evaluated"),
            Op::MatMul(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
                    return Err(NumError::ShapeMismatch {
                        op: "matmul",
                        lhs: a.shape().to_vec(),
                        rhs: b.shape().to_vec(),
                    });
                }
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for p in 0..k {
                        let av = a.at2(i, p);
                        let brow = &b.data()[p * n..(p + 1) * n];
                        let orow = &mut out[i * n..(i + 1) * n];
                        for j in 0..n {
                            orow[j] += av * brow[j];
                        }
                    }
                }
                Tensor::raw(vec![m, n], out)
            }
            Op::MatVec(m, v) => {
                let (m, v) = (self.val(*m), self.val(*v));
                if m.rank() != 2 || v.rank() != 1 || m.cols() != v.len() {
                    return Err(NumError::ShapeMismatch {
                        op: "matvec",
                        lhs: m.shape().to_vec(),
                        rhs: v.shape().to_vec(),
                    });
                }
                let out = (0..m.rows())
                    .map(|i| {
                        let row = &m.data()[i * m.cols()..(i + 1) * m.cols()];
                        row.iter().zip(v.data()).map(|(a, b)| a * b).sum()
                    })
                    .collect();
                Tensor::raw_vec(out)
            }
            Op::RowsWeighted(m, w) => {
                let (m, w) = (self.val(*m), self.val(*w));
                if m.rank() != 2 || w.rank() != 1 || m.rows() != w.len() {
                    return Err(NumError::ShapeMismatch {
                        op: "rows_weighted",
                        lhs: m.shape().to_vec(),
                        rhs: w.shape().to_vec(),
                    });
                }
                let cols = m.cols();
                let mut out = vec![0.0; cols];
                for (j, &wj) in w.data().iter().enumerate() {
                    let row = &m.data()[j * cols..(j + 1) * cols];
                    for c in 0..cols {
                        out[c] += wj * row[c];
                    }
                }
                Tensor::raw_vec(out)
            }
            Op::Add(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                if a.shape() != b.shape() {
                    return Err(NumError::ShapeMismatch {
                        op: "add",
                        lhs: a.shape().to_vec(),
                        rhs: b.shape().to_vec(),
                    });
                }
                let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
                Tensor::raw(a.shape().to_vec(), data)
            }
            Op::AddRow(m, v) => {
                let (m, v) = (self.val(*m), self.val(*v));
                if m.rank() != 2 || v.rank() != 1 || m.cols() != v.len() {
                    return Err(NumError::ShapeMismatch {
                        op: "add_row",
                        lhs: m.shape().to_vec(),
                        rhs: v.shape().to_vec(),
                    });
                }
                let cols = m.cols();
                let data = m
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + v.at(i % cols))
                    .collect();
                Tensor::raw(m.shape().to_vec(), data)
            }
            Op::Mul(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                if a.shape() != b.shape() {
                    return Err(NumError::ShapeMismatch {
                        op: "mul",
                        lhs: a.shape().to_vec(),
                        rhs: b.shape().to_vec(),
                    });
                }
                let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
                Tensor::raw(a.shape().to_vec(), data)
            }
            Op::Affine { x, scale, shift } => {
                let x = self.val(*x);
                let data = x.data().iter().map(|v| scale * v + shift).collect();
                Tensor::raw(x.shape().to_vec(), data)
            }
            Op::Sigmoid(x) => {
                let x = self.val(*x);
                let data = x.data().iter().map(|v| sigmoid(*v)).collect();
                Tensor::raw(x.shape().to_vec(), data)
            }
            Op::Tanh(x) => {
                let x = self.val(*x);
                let data = x.data().iter().map(|v| v.tanh()).collect();
                Tensor::raw(x.shape().to_vec(), data)
            }
            Op::Softmax(x) => {
                let x = self.val(*x);
                require_rank1(x, "softmax")?;
                Tensor::raw_vec(softmax_stable(x.data()))
            }
            Op::LogSoftmax(x) => {
                let x = self.val(*x);
                require_rank1(x, "log_softmax")?;
                Tensor::raw_vec(log_softmax_stable(x.data()))
            }
            Op::Pick { x, index } => {
                let x = self.val(*x);
                require_rank1(x, "pick")?;
                if *index >= x.len() {
                    return Err(NumError::IndexOutOfBounds {
                        op: "pick",
                        index: *index,
                        len: x.len(),
                    });
                }
                Tensor::raw(vec![1], vec![x.at(*index)])
            }
            Op::Row { m, index } => {
                let m = self.val(*m);
                if m.rank() != 2 {
                    return Err(NumError::BadRank {
                        op: "row",
                        expected: "rank-2",
                        got: m.shape().to_vec(),
                    });
                }
                if *index >= m.rows() {
                    return Err(NumError::IndexOutOfBounds {
                        op: "row",
                        index: *index,
                        len: m.rows(),
                    });
                }
                let cols = m.cols();
                Tensor::raw_vec(m.data()[index * cols..(index + 1) * cols].to_vec())
            }
            Op::Concat(parts) => {
                let mut data = Vec::new();
                for p in parts {
                    let t = self.val(*p);
                    require_rank1(t, "concat")?;
                    data.extend_from_slice(t.data());
                }
                Tensor::raw_vec(data)
            }
            Op::Stack(rows) => {
                let cols = self.val(rows[0]).len();
                let mut data = Vec::with_capacity(rows.len() * cols);
                for r in rows {
                    let t = self.val(*r);
                    require_rank1(t, "stack")?;
                    if t.len() != cols {
                        return Err(NumError::ShapeMismatch {
                            op: "stack",
                            lhs: vec![cols],
                            rhs: t.shape().to_vec(),
                        });
                    }
                    data.extend_from_slice(t.data());
                }
                Tensor::raw(vec![rows.len(), cols], data)
            }
            Op::Sum(x) => Tensor::raw(vec![1], vec![self.val(*x).data().iter().sum()]),
            Op::Dot(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                if a.shape() != b.shape() || a.rank() != 1 {
                    return Err(NumError::ShapeMismatch {
                        op: "dot",
                        lhs: a.shape().to_vec(),
                        rhs: b.shape().to_vec(),
                    });
                }
                Tensor::raw(vec![1], vec![a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()])
            }
            Op::SubScalar(v, s) => {
                let (v, s) = (self.val(*v), self.val(*s));
                let s = s.as_scalar()?;
                let data = v.data().iter().map(|x| x - s).collect();
                Tensor::raw(v.shape().to_vec(), data)
            }
        };
        if !out.is_all_finite() {
            return Err(NumError::NonFinite { op: op_name(op) });
        }
        Ok(out)
    }

    /// Reverse pass from `output` seeded with `seed` (same shape as the output).
    ///
    /// Returns one gradient per named trainable leaf; leaves the output does
    /// not depend on get zeros.
    pub fn backward_seeded(&self, output: NodeId, seed: &Tensor) -> Result<Gradients> {
        if !self.fresh {
            return Err(NumError::BackwardBeforeForward);
        }
        if seed.shape() != self.val(output).shape() {
            return Err(NumError::ShapeMismatch {
                op: "backward seed",
                lhs: seed.shape().to_vec(),
                rhs: self.val(output).shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output] = Some(seed.data().to_vec());

        for id in (0..=output).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            if matches!(self.nodes[id].op, Op::Leaf { .. }) {
                grads[id] = Some(g); // keep leaf gradients for collection
            }
        }

        let mut out = Gradients::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf {
                name: Some(name),
                trainable: true,
            } = &node.op
            {
                let g = match grads[id].take() {
                    Some(g) => Tensor::new(node.value.shape().to_vec(), g)?,
                    None => Tensor::zeros(node.value.shape()),
                };
                out.insert(name.clone(), g);
            }
        }
        Ok(out)
    }

    /// Reverse pass from a scalar output with seed 1.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let one = Tensor::filled(self.val(output).shape(), 1.0);
        if one.len() != 1 {
            return Err(NumError::BadRank {
                op: "backward",
                expected: "a scalar output (use backward_seeded otherwise)",
                got: self.val(output).shape().to_vec(),
            });
        }
        self.backward_seeded(output, &one)
    }

    /// Names of trainable leaves, in insertion order.
    pub fn trainable_leaves(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Leaf {
                    name: Some(name),
                    trainable: true,
                } => Some(name.clone()),
                _ => None,
            })
            .collect()
    }

    /// Node ids of named trainable leaves.
    pub fn trainable_leaf_ids(&self) -> Vec<(String, NodeId)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(id, n)| match &n.op {
                Op::Leaf {
                    name: Some(name),
                    trainable: true,
                } => Some((name.clone(), id)),
                _ => None,
            })
            .collect()
    }

    fn propagate(&self, id: NodeId, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let acc = |grads: &mut [Option<Vec<f64>>], target: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            let slot = grads[target]
                .get_or_insert_with(|| vec![0.0; self.nodes[target].value.len()]);
            f(slot);
        };
        match &self.nodes[id].op {
            Op::Leaf { .. } => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                acc(grads, *a, &mut |ga| {
                    // dA = dC * B^T
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * bv.at2(p, j);
                            }
                            ga[i * k + p] += s;
                        }
                    }
                });
                acc(grads, *b, &mut |gb| {
                    // dB = A^T * dC
                    for p in 0..k {
                        for j in 0..n {
                            let mut s = 0.0;
                            for i in 0..m {
                                s += av.at2(i, p) * g[i * n + j];
                            }
                            gb[p * n + j] += s;
                        }
                    }
                });
            }
            Op::MatVec(mid, vid) => {
                let (mv, vv) = (self.val(*mid), self.val(*vid));
                let (r, c) = (mv.rows(), mv.cols());
                acc(grads, *mid, &mut |gm| {
                    for i in 0..r {
                        for j in 0..c {
                            gm[i * c + j] += g[i] * vv.at(j);
                        }
                    }
                });
                acc(grads, *vid, &mut |gv| {
                    for i in 0..r {
                        for j in 0..c {
                            gv[j] += mv.at2(i, j) * g[i];
                        }
                    }
                });
            }
            Op::RowsWeighted(mid, wid) => {
                let (mv, wv) = (self.val(*mid), self.val(*wid));
                let (r, c) = (mv.rows(), mv.cols());
                acc(grads, *mid, &mut |gm| {
                    for j in 0..r {
                        let wj = wv.at(j);
                        for cc in 0..c {
                            gm[j * c + cc] += wj * g[cc];
                        }
                    }
                });
                acc(grads, *wid, &mut |gw| {
                    for j in 0..r {
                        let mut s = 0.0;
                        for cc in 0..c {
                            s += mv.at2(j, cc) * g[cc];
                        }
                        gw[j] += s;
                    }
                });
            }
            Op::Add(a, b) => {
                acc(grads, *a, &mut |ga| {
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                });
                acc(grads, *b, &mut |gb| {
                    for (x, y) in gb.iter_mut().zip(g) {
                        *x += y;
                    }
                });
            }
            Op::AddRow(mid, vid) => {
                let cols = self.val(*vid).len();
                acc(grads, *mid, &mut |gm| {
                    for (x, y) in gm.iter_mut().zip(g) {
                        *x += y;
                    }
                });
                acc(grads, *vid, &mut |gv| {
                    for (i, y) in g.iter().enumerate() {
                        gv[i % cols] += y;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                acc(grads, *a, &mut |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv.at(i);
                    }
                });
                acc(grads, *b, &mut |gb| {
                    for i in 0..g.len() {
                        gb[i] += g[i] * av.at(i);
                    }
                });
            }
            Op::Affine { x, scale, .. } => {
                let scale = *scale;
                acc(grads, *x, &mut |gx| {
                    for i in 0..g.len() {
                        gx[i] += scale * g[i];
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &self.nodes[id].value;
                acc(grads, *x, &mut |gx| {
                    for i in 0..g.len() {
                        let s = y.at(i);
                        gx[i] += g[i] * s * (1.0 - s);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = &self.nodes[id].value;
                acc(grads, *x, &mut |gx| {
                    for i in 0..g.len() {
                        let t = y.at(i);
                        gx[i] += g[i] * (1.0 - t * t);
                    }
                });
            }
            Op::Softmax(x) => {
                let y = &self.nodes[id].value;
                let inner: f64 = y.data().iter().zip(g).map(|(s, d)| s * d).sum();
                acc(grads, *x, &mut |gx| {
                    for i in 0..g.len() {
                        gx[i] += y.at(i) * (g[i] - inner);
                    }
                });
            }
            Op::LogSoftmax(x) => {
                let y = &self.nodes[id].value;
                let total: f64 = g.iter().sum();
                acc(grads, *x, &mut |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] - y.at(i).exp() * total;
                    }
                });
            }
            Op::Pick { x, index } => {
                let index = *index;
                acc(grads, *x, &mut |gx| {
                    gx[index] += g[0];
                });
            }
            Op::Row { m, index } => {
                let cols = self.val(*m).cols();
                let index = *index;
                acc(grads, *m, &mut |gm| {
                    for j in 0..cols {
                        gm[index * cols + j] += g[j];
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.val(*p).len();
                    let chunk = &g[offset..offset + n];
                    acc(grads, *p, &mut |gp| {
                        for (x, y) in gp.iter_mut().zip(chunk) {
                            *x += y;
                        }
                    });
                    offset += n;
                }
            }
            Op::Stack(rows) => {
                let cols = self.val(rows[0]).len();
                for (r, p) in rows.iter().enumerate() {
                    let chunk = &g[r * cols..(r + 1) * cols];
                    acc(grads, *p, &mut |gp| {
                        for (x, y) in gp.iter_mut().zip(chunk) {
                            *x += y;
                        }
                    });
                }
            }
            Op::Sum(x) => {
                acc(grads, *x, &mut |gx| {
                    for v in gx.iter_mut() {
                        *v += g[0];
                    }
                });
            }
            Op::Dot(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                acc(grads, *a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[0] * bv.at(i);
                    }
                });
                acc(grads, *b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] += g[0] * av.at(i);
                    }
                });
            }
            Op::SubScalar(v, s) => {
                acc(grads, *v, &mut |gv| {
                    for (x, y) in gv.iter_mut().zip(g) {
                        *x += y;
                    }
                });
                let total: f64 = g.iter().sum();
                acc(grads, *s, &mut |gs| {
                    gs[0] -= total;
                });
            }
        }
        Ok(())
    }
}

fn require_rank1(t: &Tensor, op: &'static str) -> Result<()> {
    if t.rank() == 1 {
        Ok(())
    } else {
        Err(NumError::BadRank {
            op,
            expected: "rank-1",
            got: t.shape().to_vec(),
        })
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf { .. } => "leaf",
        Op::MatMul(..) => "matmul",
        Op::MatVec(..) => "matvec",
        Op::RowsWeighted(..) => "rows_weighted",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::Mul(..) => "mul",
        Op::Affine { .. } => "affine",
        Op::Sigmoid(..) => "sigmoid",
        Op::Tanh(..) => "tanh",
        Op::Softmax(..) => "softmax",
        Op::LogSoftmax(..) => "log_softmax",
        Op::Pick { .. } => "pick",
        Op::Row { .. } => "row",
        Op::Concat(..) => "concat",
        Op::Stack(..) => "stack",
        Op::Sum(..) => "sum",
        Op::Dot(..) => "dot",
        Op::SubScalar(..) => "sub_scalar",
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax with the row max subtracted.
pub fn softmax_stable(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

pub fn log_softmax_stable(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = x.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    x.iter().map(|v| v - lse).collect()
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    x.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max
}
