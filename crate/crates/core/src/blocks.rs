//! Reusable neural blocks: linear layers, scaled dot-product self-attention,
//! soft pooling and the two-layer subtask head.
//!
//! Layers do not own their weights. Every weight lives in a [`ParamSet`] and
//! a layer stores [`ParamId`] handles into it; a forward pass first binds the
//! whole set into a [`Graph`] and then resolves handles through [`Bound`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of every learnable tensor of a model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    /// Total number of scalar weights.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Inserts every parameter as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound(self.values.iter().map(|v| g.param(v.clone())).collect())
    }

    /// Inserts every parameter as a constant (evaluation only).
    pub fn bind_frozen(&self, g: &mut Graph) -> Bound {
        Bound(self.values.iter().map(|v| g.constant(v.clone())).collect())
    }

    /// Replaces all values, checking names and shapes line up.
    pub fn load_values(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::contract(format!(
                "expected {} parameter tensors, got {}",
                self.values.len(),
                values.len()
            )));
        }
        for (i, v) in values.iter().enumerate() {
            if v.dims() != self.values[i].dims() {
                return Err(Error::Shape {
                    op: "load parameter",
                    lhs: self.values[i].dims().to_vec(),
                    rhs: v.dims().to_vec(),
                });
            }
        }
        self.values = values;
        Ok(())
    }
}

/// Graph nodes for a bound [`ParamSet`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<NodeId>);

impl Bound {
    pub fn node(&self, id: ParamId) -> NodeId {
        self.0[id.0]
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }
}

/// Glorot-uniform weight source; biases start at zero.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn glorot(&mut self, d_in: usize, d_out: usize) -> Tensor {
        let limit = (6.0 / (d_in + d_out) as f64).sqrt();
        let data = (0..d_in * d_out)
            .map(|_| self.rng.random_range(-limit..=limit))
            .collect();
        Tensor::matrix(d_in, d_out, data).expect("positive layer dims")
    }
}

/// Affine map `x·W + b` applied row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl LinearLayer {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        let w = params.add(format!("{name}.w"), init.glorot(d_in, d_out));
        let b = params.add(format!("{name}.b"), Tensor::zeros(&[1, d_out]));
        Self { w, b, d_in, d_out }
    }

    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> Result<NodeId> {
        let xw = g.matmul(x, bound.node(self.w))?;
        g.add_row(xw, bound.node(self.b))
    }
}

/// Multi-head scaled dot-product self-attention without masking, positional
/// encoding or residual connection.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfAttentionLayer {
    pub query: LinearLayer,
    pub key: LinearLayer,
    pub value: LinearLayer,
    pub heads: usize,
}

impl SelfAttentionLayer {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        d_in: usize,
        d_out: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || !d_out.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "{name}: output dim {d_out} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            query: LinearLayer::new(params, init, &format!("{name}.q"), d_in, d_out),
            key: LinearLayer::new(params, init, &format!("{name}.k"), d_in, d_out),
            value: LinearLayer::new(params, init, &format!("{name}.v"), d_in, d_out),
            heads,
        })
    }

    pub fn d_in(&self) -> usize {
        self.query.d_in
    }

    pub fn d_out(&self) -> usize {
        self.query.d_out
    }

    /// Attends an `n × d_in` sequence to itself, returning `n × d_out`.
    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> Result<NodeId> {
        let (n, d_in) = g.value(x).shape2()?;
        if n == 0 {
            return Err(Error::contract("self-attention over an empty sequence"));
        }
        if d_in != self.d_in() {
            return Err(Error::Shape {
                op: "self_attention",
                lhs: vec![n, d_in],
                rhs: vec![self.d_in(), self.d_out()],
            });
        }
        let q = self.query.forward(g, bound, x)?;
        let k = self.key.forward(g, bound, x)?;
        let v = self.value.forward(g, bound, x)?;
        let head_dim = self.d_out() / self.heads;
        let inv_sqrt = 1.0 / (head_dim as f64).sqrt();

        let mut outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                let start = h * head_dim;
                (
                    g.slice_cols(q, start, head_dim)?,
                    g.slice_cols(k, start, head_dim)?,
                    g.slice_cols(v, start, head_dim)?,
                )
            };
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, inv_sqrt);
            let weights = g.softmax(scores, 1)?;
            outputs.push(g.matmul(weights, vh)?);
        }
        if outputs.len() == 1 {
            Ok(outputs[0])
        } else {
            g.concat_cols(&outputs)
        }
    }
}

/// Collapses an `n × d` sequence into a `1 × d` vector by a per-column
/// softmax-weighted average: `Σ_i e^{x_id} x_id / Σ_j e^{x_jd}`.
pub fn soft_pool(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    let (n, _) = g.value(x).shape2()?;
    if n == 0 {
        return Err(Error::contract("soft pooling over an empty sequence"));
    }
    let weights = g.softmax(x, 0)?;
    let weighted = g.mul(weights, x)?;
    g.sum_axis(weighted, 0)
}

/// Two linear layers with GELU in between, narrowing `d → ⌈d/2⌉ → 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpHead {
    pub layer1: LinearLayer,
    pub layer2: LinearLayer,
}

impl MlpHead {
    pub fn new(params: &mut ParamSet, init: &mut Initializer, name: &str, d: usize) -> Self {
        let hidden = d.div_ceil(2);
        Self {
            layer1: LinearLayer::new(params, init, &format!("{name}.fc1"), d, hidden),
            layer2: LinearLayer::new(params, init, &format!("{name}.fc2"), hidden, 1),
        }
    }

    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> Result<NodeId> {
        let h = self.layer1.forward(g, bound, x)?;
        let h = g.gelu(h);
        self.layer2.forward(g, bound, h)
    }
}
