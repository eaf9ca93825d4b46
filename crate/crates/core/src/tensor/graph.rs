//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! Nodes are appended in evaluation order, so the node index is already a
//! topological order and [`Graph::backward`] walks it in reverse. A graph
//! is single-use: build it, read values, call `backward` once.

use super::matrix::gemm;
use super::{ops, Matrix, TensorError};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Relu(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize),
    Unfold(NodeId, usize),
    Mean(NodeId),
    SoftmaxCrossEntropy(NodeId, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Computation graph.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that requires one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Moves the gradient out, leaving `None` behind.
    pub fn take(&mut self, id: NodeId) -> Option<Matrix> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Constant, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Adds a `1 x n` bias row to every row of a `T x n` matrix.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, TensorError> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(TensorError::shape("add_bias", x.shape(), b.shape()));
        }
        let mut value = x.clone();
        for r in 0..value.rows() {
            for (o, &v) in value.row_mut(r).iter_mut().zip(b.as_slice()) {
                *o += v;
            }
        }
        let rg = self.needs(&[a, bias]);
        Ok(self.push(value, Op::AddBias(a, bias), rg))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let value = self.value(a).scale(factor);
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = ops::sigmoid(self.value(a));
        let rg = self.needs(&[a]);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|v| v.max(0.0));
        let rg = self.needs(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::concat_cols(&mats)?;
        let rg = self.needs(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_cols(
        &mut self,
        a: NodeId,
        start: usize,
        len: usize,
    ) -> Result<NodeId, TensorError> {
        let value = self.value(a).slice_cols(start, len)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    /// Temporal window: row `t` of the output is the concatenation of input
    /// rows `t - k/2 ..= t + k/2`, zero-padded at both ends. Followed by a
    /// matmul this is a stride-1 "same" convolution along the row axis.
    pub fn unfold(&mut self, a: NodeId, width: usize) -> Result<NodeId, TensorError> {
        if width.is_multiple_of(2) {
            return Err(TensorError::EvenKernel(width));
        }
        let x = self.value(a);
        let (t_len, c) = x.shape();
        let radius = (width / 2) as isize;
        let mut value = Matrix::zeros(t_len, width * c);
        for t in 0..t_len {
            for j in 0..width {
                let src = t as isize + j as isize - radius;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                value.row_mut(t)[j * c..(j + 1) * c].copy_from_slice(x.row(src as usize));
            }
        }
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Unfold(a, width), rg))
    }

    /// Mean of all entries, as a `1 x 1` node.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let value = Matrix::scalar(x.sum() / x.len().max(1) as f64);
        let rg = self.needs(&[a]);
        self.push(value, Op::Mean(a), rg)
    }

    /// Fused row-wise softmax + cross-entropy, summed over rows (`1 x 1`).
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
    ) -> Result<NodeId, TensorError> {
        let z = self.value(logits);
        if targets.len() != z.rows() {
            return Err(TensorError::shape(
                "softmax_cross_entropy",
                z.shape(),
                (targets.len(), 1),
            ));
        }
        let mut total = 0.0;
        for (r, &target) in targets.iter().enumerate() {
            total += ops::cross_entropy(z.row(r), target)?;
        }
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Matrix::scalar(total),
            Op::SoftmaxCrossEntropy(logits, targets.to_vec()),
            rg,
        ))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, TensorError> {
        let root_value = self.value(root);
        if root_value.shape() != (1, 1) {
            return Err(TensorError::NonScalarRoot(root_value.shape()));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        if self.nodes[root.0].requires_grad {
            grads[root.0] = Some(Matrix::scalar(1.0));
        }
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], id: NodeId, delta: Matrix) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(g) => g.add_assign(&delta),
            slot => *slot = Some(delta),
        }
    }

    /// Accumulates `op(a)·op(b)` into the gradient of `id`, avoiding a
    /// temporary when the slot already exists.
    fn accumulate_gemm(
        &self,
        grads: &mut [Option<Matrix>],
        id: NodeId,
        (a, a_t): (&Matrix, bool),
        (b, b_t): (&Matrix, bool),
    ) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let shape = self.value(id).shape();
        let slot = grads[id.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1));
        gemm(a, a_t, b, b_t, slot);
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                // C = A·B: dA = dC·Bᵀ, dB = Aᵀ·dC
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate_gemm(grads, *a, (g, false), (bv, true));
                self.accumulate_gemm(grads, *b, (av, true), (g, false));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddBias(a, bias) => {
                self.accumulate(grads, *a, g.clone());
                if self.nodes[bias.0].requires_grad {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in db.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *bias, db);
                }
            }
            Op::Scale(a, factor) => self.accumulate(grads, *a, g.scale(*factor)),
            Op::Sigmoid(a) => {
                let y = &node.value;
                let mut d = g.clone();
                for (o, &s) in d.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *o *= s * (1.0 - s);
                }
                self.accumulate(grads, *a, d);
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let mut d = g.clone();
                for (o, &v) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if v <= 0.0 {
                        *o = 0.0;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let width = self.value(p).cols();
                    if self.nodes[p.0].requires_grad {
                        let d = g.slice_cols(offset, width).expect("concat slice in range");
                        self.accumulate(grads, p, d);
                    }
                    offset += width;
                }
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = self.value(*a).shape();
                let mut d = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *a, d);
            }
            Op::Unfold(a, width) => {
                let (t_len, c) = self.value(*a).shape();
                let radius = (*width / 2) as isize;
                let mut d = Matrix::zeros(t_len, c);
                for t in 0..t_len {
                    for j in 0..*width {
                        let src = t as isize + j as isize - radius;
                        if src < 0 || src >= t_len as isize {
                            continue;
                        }
                        let from = &g.row(t)[j * c..(j + 1) * c];
                        for (o, &v) in d.row_mut(src as usize).iter_mut().zip(from) {
                            *o += v;
                        }
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Mean(a) => {
                let (rows, cols) = self.value(*a).shape();
                let upstream = g.as_slice()[0];
                let n = (rows * cols).max(1) as f64;
                self.accumulate(grads, *a, Matrix::filled(rows, cols, upstream / n));
            }
            Op::SoftmaxCrossEntropy(logits, targets) => {
                let z = self.value(*logits);
                let upstream = g.as_slice()[0];
                let mut d = Matrix::zeros(z.rows(), z.cols());
                for (r, &target) in targets.iter().enumerate() {
                    let p = ops::softmax(z.row(r));
                    let row = d.row_mut(r);
                    for (o, pv) in row.iter_mut().zip(p) {
                        *o = pv * upstream;
                    }
                    row[target] -= upstream;
                }
                self.accumulate(grads, *logits, d);
            }
        }
    }
}
