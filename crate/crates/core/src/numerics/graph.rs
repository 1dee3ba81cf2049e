//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only arena of nodes. Every operation evaluates
//! eagerly and records which inputs it consumed, so node ids are already a
//! topological order and [`Graph::backward`] is a single reverse sweep.
//!
//! ```
//! use mmss::numerics::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::row_vector(vec![1.0, -2.0, 3.0]));
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap().data(), &[2.0, -4.0, 6.0]);
//! ```

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Handle to a node inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Pointwise maps with analytic derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Sigmoid,
    Tanh,
    /// `max(0, x)`, subgradient 0 at 0.
    Relu,
    /// `|x|`, subgradient 0 at 0.
    Abs,
    /// Exact-erf GELU.
    Gelu,
    Exp,
}

impl Elementwise {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Elementwise::Sigmoid => sigmoid(x),
            Elementwise::Tanh => x.tanh(),
            Elementwise::Relu => x.max(0.0),
            Elementwise::Abs => x.abs(),
            Elementwise::Gelu => gelu(x),
            Elementwise::Exp => x.exp(),
        }
    }

    /// Derivative at `x`, given the already computed output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Elementwise::Sigmoid => y * (1.0 - y),
            Elementwise::Tanh => 1.0 - y * y,
            Elementwise::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Elementwise::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Elementwise::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
                cdf + x * pdf
            }
            Elementwise::Exp => y,
        }
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

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// matrix (m×n) plus a row vector (1×n) broadcast down the rows
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Map(NodeId, Elementwise),
    Softmax(NodeId, usize),
    SumAll(NodeId),
    SumAxis(NodeId, usize),
    Transpose(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows(NodeId, usize),
    SliceCols(NodeId, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation graph for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i.0].requires_grad);
        self.push(value, op, requires_grad)
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Accumulated gradient, `None` if backward never reached the node.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn grad_or_zeros(&self, id: NodeId) -> Tensor {
        self.grad(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.value(id).dims()))
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn same_dims(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (da, db) = (self.value(a).dims(), self.value(b).dims());
        if da != db {
            return Err(Error::Shape {
                op,
                lhs: da.to_vec(),
                rhs: db.to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push_op(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_dims("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push_op(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_dims("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push_op(value, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_dims("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push_op(value, Op::Mul(a, b), &[a, b]))
    }

    /// `x + 1·bias` where `bias` is a single row.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(x).shape2()?;
        let (br, bc) = self.value(bias).shape2()?;
        if br != 1 || bc != c {
            return Err(Error::Shape {
                op: "add_row",
                lhs: vec![r, c],
                rhs: vec![br, bc],
            });
        }
        let b = self.value(bias).data().to_vec();
        let mut value = self.value(x).clone();
        for row in value.data_mut().chunks_mut(c) {
            for (v, bv) in row.iter_mut().zip(&b) {
                *v += bv;
            }
        }
        Ok(self.push_op(value, Op::AddRow(x, bias), &[x, bias]))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let value = self.value(x).map(|v| v * factor);
        self.push_op(value, Op::Scale(x, factor), &[x])
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).map(|v| v + c);
        self.push_op(value, Op::AddScalar(x), &[x])
    }

    pub fn map(&mut self, x: NodeId, kind: Elementwise) -> NodeId {
        let value = self.value(x).map(|v| kind.apply(v));
        self.push_op(value, Op::Map(x, kind), &[x])
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        self.map(x, Elementwise::Gelu)
    }

    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let value = self.value(x).softmax(axis)?;
        Ok(self.push_op(value, Op::Softmax(x, axis), &[x]))
    }

    /// Sum of all elements as a 1×1 tensor.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(x).sum());
        self.push_op(value, Op::SumAll(x), &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn sum_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let value = self.value(x).sum_axis(axis)?;
        Ok(self.push_op(value, Op::SumAxis(x, axis), &[x]))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).transpose()?;
        Ok(self.push_op(value, Op::Transpose(x), &[x]))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_rows(&tensors)?;
        Ok(self.push_op(value, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_cols(&tensors)?;
        Ok(self.push_op(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let value = self.value(x).slice_rows(start, len)?;
        Ok(self.push_op(value, Op::SliceRows(x, start), &[x]))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let value = self.value(x).slice_cols(start, len)?;
        Ok(self.push_op(value, Op::SliceCols(x, start), &[x]))
    }

    /// Propagates d(root)/d(node) to every node that requires a gradient.
    ///
    /// Gradients accumulate into the graph's buffers; call
    /// [`Graph::zero_grad`] between passes to reset them.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.value(root).numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got dims {:?}",
                self.value(root).dims()
            )));
        }
        let mut local: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        local[root.0] = Some(Tensor::filled(self.value(root).dims(), 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = local[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut local)?;
            match &mut self.grads[idx] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Tensor, local: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let mut send = |target: NodeId, contribution: Tensor| {
            if !self.nodes[target.0].requires_grad {
                return;
            }
            match &mut local[target.0] {
                Some(acc) => acc.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    send(*a, g.matmul_t(bv));
                }
                if self.requires_grad(*b) {
                    send(*b, av.t_matmul(g));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                send(*a, g.zip_map(bv, |x, y| x * y));
                send(*b, g.zip_map(av, |x, y| x * y));
            }
            Op::AddRow(x, bias) => {
                send(*x, g.clone());
                if self.requires_grad(*bias) {
                    send(*bias, g.sum_axis(0)?);
                }
            }
            Op::Scale(x, factor) => send(*x, g.map(|v| v * factor)),
            Op::AddScalar(x) => send(*x, g.clone()),
            Op::Map(x, kind) => {
                let xv = self.value(*x);
                let yv = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data().iter().zip(yv.data()))
                    .map(|(&gi, (&xi, &yi))| gi * kind.derivative(xi, yi))
                    .collect();
                send(*x, Tensor::new(xv.dims().to_vec(), data)?);
            }
            Op::Softmax(x, axis) => {
                let y = &node.value;
                let (outer, len, inner) = y.axis_extents(*axis)?;
                let mut out = vec![0.0; y.numel()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + i;
                        let dot: f64 = (0..len).map(|j| g.data()[at(j)] * y.data()[at(j)]).sum();
                        for j in 0..len {
                            out[at(j)] = y.data()[at(j)] * (g.data()[at(j)] - dot);
                        }
                    }
                }
                send(*x, Tensor::new(y.dims().to_vec(), out)?);
            }
            Op::SumAll(x) => {
                send(*x, Tensor::filled(self.value(*x).dims(), g.item()));
            }
            Op::SumAxis(x, axis) => {
                let xv = self.value(*x);
                let (outer, len, inner) = xv.axis_extents(*axis)?;
                let mut out = vec![0.0; xv.numel()];
                for o in 0..outer {
                    for j in 0..len {
                        for i in 0..inner {
                            out[(o * len + j) * inner + i] = g.data()[o * inner + i];
                        }
                    }
                }
                send(*x, Tensor::new(xv.dims().to_vec(), out)?);
            }
            Op::Transpose(x) => send(*x, g.transpose()?),
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let rows = self.value(*p).rows();
                    if self.requires_grad(*p) {
                        send(*p, g.slice_rows(start, rows)?);
                    }
                    start += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let cols = self.value(*p).cols();
                    if self.requires_grad(*p) {
                        send(*p, g.slice_cols(start, cols)?);
                    }
                    start += cols;
                }
            }
            Op::SliceRows(x, start) => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut full = Tensor::zeros(xv.dims());
                full.data_mut()[start * c..start * c + g.numel()].copy_from_slice(g.data());
                send(*x, full);
            }
            Op::SliceCols(x, start) => {
                let xv = self.value(*x);
                let (r, c) = xv.shape2()?;
                let w = g.cols();
                let mut full = Tensor::zeros(&[r, c]);
                for i in 0..r {
                    full.data_mut()[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                }
                send(*x, full);
            }
        }
        Ok(())
    }
}
