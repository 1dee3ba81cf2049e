//! The scoring network: visual projection, five cross-modal interaction
//! encoders, global fusion head and five subtask heads.
//!
//! Fused representation order is fixed:
//! `F_c = [f_ptrt; f_pvrv; f_ptrv; f_pvrt; f_rtrv]`, matching
//! [`InteractionKind::SUBTASKS`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blocks::{
    soft_pool, Bound, Initializer, LinearLayer, MlpHead, ParamId, ParamSet, SelfAttentionLayer,
};
use crate::dataset::{ProductRecord, ReviewRecord};
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor};

pub const NUM_SUBTASKS: usize = 5;

/// The five review/product interactions plus the global task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    PtRt,
    PvRv,
    PtRv,
    PvRt,
    RtRv,
    Global,
}

impl InteractionKind {
    /// Subtask interactions in fusion order.
    pub const SUBTASKS: [InteractionKind; NUM_SUBTASKS] = [
        InteractionKind::PtRt,
        InteractionKind::PvRv,
        InteractionKind::PtRv,
        InteractionKind::PvRt,
        InteractionKind::RtRv,
    ];

    /// Position in [`Self::SUBTASKS`]; `None` for `Global`.
    pub fn subtask_index(self) -> Option<usize> {
        Self::SUBTASKS.iter().position(|&k| k == self)
    }

    pub fn name(self) -> &'static str {
        match self {
            InteractionKind::PtRt => "ptrt",
            InteractionKind::PvRv => "pvrv",
            InteractionKind::PtRv => "ptrv",
            InteractionKind::PvRt => "pvrt",
            InteractionKind::RtRv => "rtrv",
            InteractionKind::Global => "global",
        }
    }
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InteractionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::SUBTASKS
            .into_iter()
            .chain([InteractionKind::Global])
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown interaction `{s}`")))
    }
}

/// How review/product features reach the global score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Five interaction encoders fused into the global head.
    #[default]
    Interaction,
    /// Mean-pooled raw sequences concatenated into a single MLP; no
    /// interaction encoders and no subtasks.
    DirectConcat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_t: usize,
    pub d_roi: usize,
    /// Projected visual width; must equal `d_t` so text and vision rows can
    /// share one attention sequence.
    pub d_v: usize,
    pub d_f: usize,
    pub d_g: usize,
    pub heads: usize,
}

impl ModelDims {
    /// Every hidden width equal to the text width.
    pub fn uniform(d_t: usize, d_roi: usize) -> Self {
        Self {
            d_t,
            d_roi,
            d_v: d_t,
            d_f: d_t,
            d_g: d_t,
            heads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_t", self.d_t),
            ("d_roi", self.d_roi),
            ("d_v", self.d_v),
            ("d_f", self.d_f),
            ("d_g", self.d_g),
            ("heads", self.heads),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.d_v != self.d_t {
            return Err(Error::Config(format!(
                "d_v ({}) must equal d_t ({}) for mixed text/vision attention",
                self.d_v, self.d_t
            )));
        }
        if !self.d_v.is_multiple_of(self.heads) || !self.d_f.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "heads ({}) must divide d_v ({}) and d_f ({})",
                self.heads, self.d_v, self.d_f
            )));
        }
        Ok(())
    }
}

/// Raw inputs for one product/review pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBundle {
    pub t_p: Tensor,
    pub t_r: Tensor,
    pub v_p_raw: Tensor,
    pub v_r_raw: Tensor,
}

impl FeatureBundle {
    pub fn new(product: &ProductRecord, review: &ReviewRecord) -> Self {
        Self {
            t_p: product.text_features.clone(),
            t_r: review.text_features.clone(),
            v_p_raw: product.image_features.clone(),
            v_r_raw: review.image_features.clone(),
        }
    }
}

/// All learnable weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub architecture: Architecture,
    pub store: ParamSet,
    pub visual_proj: SelfAttentionLayer,
    pub interaction_layers: [SelfAttentionLayer; NUM_SUBTASKS],
    pub fusion: LinearLayer,
    /// Houses `W^g` and `b^g`.
    pub global_head: LinearLayer,
    pub subtask_proj: [LinearLayer; NUM_SUBTASKS],
    pub subtask_heads: [MlpHead; NUM_SUBTASKS],
    /// `1 × 5` row of `log σ_s²`.
    pub log_vars: ParamId,
    pub concat_head: Option<MlpHead>,
}

impl ModelParams {
    pub fn new(dims: ModelDims, architecture: Architecture, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut store = ParamSet::new();
        let mut init = Initializer::new(seed);
        let visual_proj = SelfAttentionLayer::new(
            &mut store,
            &mut init,
            "visual_proj",
            dims.d_roi,
            dims.d_v,
            dims.heads,
        )?;
        let interaction_layers = try_array(|s| {
            let name = format!("interaction.{}", InteractionKind::SUBTASKS[s]);
            SelfAttentionLayer::new(&mut store, &mut init, &name, dims.d_t, dims.d_f, dims.heads)
        })?;
        let fusion = LinearLayer::new(
            &mut store,
            &mut init,
            "fusion",
            NUM_SUBTASKS * dims.d_f,
            dims.d_g,
        );
        let global_head = LinearLayer::new(&mut store, &mut init, "global_head", dims.d_g, 1);
        let subtask_proj = try_array(|s| {
            let name = format!("subtask_proj.{}", InteractionKind::SUBTASKS[s]);
            Ok(LinearLayer::new(
                &mut store, &mut init, &name, dims.d_f, dims.d_f,
            ))
        })?;
        let subtask_heads = try_array(|s| {
            let name = format!("subtask_head.{}", InteractionKind::SUBTASKS[s]);
            Ok(MlpHead::new(&mut store, &mut init, &name, dims.d_f))
        })?;
        let log_vars = store.add("log_vars", Tensor::zeros(&[1, NUM_SUBTASKS]));
        let concat_head = match architecture {
            Architecture::Interaction => None,
            Architecture::DirectConcat => Some(MlpHead::new(
                &mut store,
                &mut init,
                "concat_head",
                2 * dims.d_t + 2 * dims.d_v,
            )),
        };
        Ok(Self {
            dims,
            architecture,
            store,
            visual_proj,
            interaction_layers,
            fusion,
            global_head,
            subtask_proj,
            subtask_heads,
            log_vars,
            concat_head,
        })
    }

    pub fn check_bundle(&self, b: &FeatureBundle) -> Result<()> {
        let checks = [
            ("t_p", &b.t_p, self.dims.d_t),
            ("t_r", &b.t_r, self.dims.d_t),
            ("v_p_raw", &b.v_p_raw, self.dims.d_roi),
            ("v_r_raw", &b.v_r_raw, self.dims.d_roi),
        ];
        for (name, t, cols) in checks {
            let (_, c) = t.shape2()?;
            if c != cols {
                return Err(Error::Shape {
                    op: name,
                    lhs: t.dims().to_vec(),
                    rhs: vec![cols],
                });
            }
        }
        Ok(())
    }

    /// Runs the shared visual self-attention over the stacked product and
    /// review RoI rows and splits the result back.
    pub fn project_visual_nodes(
        &self,
        g: &mut Graph,
        bound: &Bound,
        v_p_raw: NodeId,
        v_r_raw: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let n_p = g.value(v_p_raw).rows();
        let n_r = g.value(v_r_raw).rows();
        let stacked = g.concat_rows(&[v_p_raw, v_r_raw])?;
        let projected = self.visual_proj.forward(g, bound, stacked)?;
        Ok((
            g.slice_rows(projected, 0, n_p)?,
            g.slice_rows(projected, n_p, n_r)?,
        ))
    }

    /// Encodes one interaction into a `1 × d_f` vector.
    pub fn interact_nodes(
        &self,
        g: &mut Graph,
        bound: &Bound,
        kind: InteractionKind,
        seq: &SequenceNodes,
    ) -> Result<NodeId> {
        let s = kind
            .subtask_index()
            .ok_or_else(|| Error::contract("the global task has no interaction encoder"))?;
        let (a, b) = match kind {
            InteractionKind::PtRt => (seq.t_p, seq.t_r),
            InteractionKind::PvRv => (seq.v_p, seq.v_r),
            InteractionKind::PtRv => (seq.t_p, seq.v_r),
            InteractionKind::PvRt => (seq.v_p, seq.t_r),
            InteractionKind::RtRv => (seq.t_r, seq.v_r),
            InteractionKind::Global => unreachable!(),
        };
        let joined = g.concat_rows(&[a, b])?;
        let attended = self.interaction_layers[s].forward(g, bound, joined)?;
        soft_pool(g, attended)
    }

    /// Inserts a bundle's features as constants and projects the visual rows.
    pub fn sequence_nodes(
        &self,
        g: &mut Graph,
        bound: &Bound,
        bundle: &FeatureBundle,
    ) -> Result<SequenceNodes> {
        self.check_bundle(bundle)?;
        if bundle.v_p_raw.rows() == 0 || bundle.v_r_raw.rows() == 0 {
            return Err(Error::contract(
                "visual projection needs at least one RoI row each",
            ));
        }
        let t_p = g.constant(bundle.t_p.clone());
        let t_r = g.constant(bundle.t_r.clone());
        let v_p_raw = g.constant(bundle.v_p_raw.clone());
        let v_r_raw = g.constant(bundle.v_r_raw.clone());
        let (v_p, v_r) = self.project_visual_nodes(g, bound, v_p_raw, v_r_raw)?;
        Ok(SequenceNodes { t_p, t_r, v_p, v_r })
    }

    /// Builds the full forward graph. Subtask heads run only where
    /// `active[s]` is set; the global path never depends on it.
    pub fn forward_nodes(
        &self,
        g: &mut Graph,
        bound: &Bound,
        bundle: &FeatureBundle,
        active: [bool; NUM_SUBTASKS],
    ) -> Result<ForwardNodes> {
        let seq = self.sequence_nodes(g, bound, bundle)?;
        if let Some(head) = &self.concat_head {
            let mut pooled = Vec::with_capacity(4);
            for x in [seq.t_p, seq.t_r, seq.v_p, seq.v_r] {
                let n = g.value(x).rows() as f64;
                let s = g.sum_axis(x, 0)?;
                pooled.push(g.scale(s, 1.0 / n));
            }
            let joined = g.concat_cols(&pooled)?;
            let y_g = head.forward(g, bound, joined)?;
            return Ok(ForwardNodes {
                y_g,
                f_g: None,
                f_s: [None; NUM_SUBTASKS],
                y_s: [None; NUM_SUBTASKS],
            });
        }

        let mut f = Vec::with_capacity(NUM_SUBTASKS);
        for kind in InteractionKind::SUBTASKS {
            f.push(self.interact_nodes(g, bound, kind, &seq)?);
        }
        let fused = g.concat_cols(&f)?;
        let hidden = self.fusion.forward(g, bound, fused)?;
        let f_g = g.gelu(hidden);
        let y_g = self.global_head.forward(g, bound, f_g)?;

        let mut f_s = [None; NUM_SUBTASKS];
        let mut y_s = [None; NUM_SUBTASKS];
        for s in 0..NUM_SUBTASKS {
            if !active[s] {
                continue;
            }
            let proj = self.subtask_proj[s].forward(g, bound, f[s])?;
            let rep = g.gelu(proj);
            f_s[s] = Some(rep);
            y_s[s] = Some(self.subtask_heads[s].forward(g, bound, rep)?);
        }
        Ok(ForwardNodes {
            y_g,
            f_g: Some(f_g),
            f_s,
            y_s,
        })
    }

    /// Projected visual sequences `(V^p, V^r)`.
    pub fn project_visual(&self, bundle: &FeatureBundle) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let bound = self.store.bind_frozen(&mut g);
        let seq = self.sequence_nodes(&mut g, &bound, bundle)?;
        Ok((g.value(seq.v_p).clone(), g.value(seq.v_r).clone()))
    }

    /// Pooled interaction vector `f_s` for one subtask kind.
    pub fn interact(&self, kind: InteractionKind, bundle: &FeatureBundle) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.store.bind_frozen(&mut g);
        let seq = self.sequence_nodes(&mut g, &bound, bundle)?;
        let f = self.interact_nodes(&mut g, &bound, kind, &seq)?;
        Ok(g.value(f).clone())
    }

    pub fn forward(&self, bundle: &FeatureBundle) -> Result<ForwardOutput> {
        let mut g = Graph::new();
        let bound = self.store.bind_frozen(&mut g);
        let nodes = self.forward_nodes(&mut g, &bound, bundle, [true; NUM_SUBTASKS])?;
        Ok(nodes.read(&g))
    }

    /// Global helpfulness score only.
    pub fn score(&self, bundle: &FeatureBundle) -> Result<f64> {
        let mut g = Graph::new();
        let bound = self.store.bind_frozen(&mut g);
        let nodes = self.forward_nodes(&mut g, &bound, bundle, [false; NUM_SUBTASKS])?;
        Ok(g.value(nodes.y_g).item())
    }
}

fn try_array<T>(mut f: impl FnMut(usize) -> Result<T>) -> Result<[T; NUM_SUBTASKS]> {
    Ok([f(0)?, f(1)?, f(2)?, f(3)?, f(4)?])
}

/// Graph handles for the four operand sequences of one pair.
#[derive(Clone, Copy, Debug)]
pub struct SequenceNodes {
    pub t_p: NodeId,
    pub t_r: NodeId,
    pub v_p: NodeId,
    pub v_r: NodeId,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardNodes {
    pub y_g: NodeId,
    pub f_g: Option<NodeId>,
    pub f_s: [Option<NodeId>; NUM_SUBTASKS],
    pub y_s: [Option<NodeId>; NUM_SUBTASKS],
}

impl ForwardNodes {
    pub fn read(&self, g: &Graph) -> ForwardOutput {
        let vec_of =
            |id: Option<NodeId>| id.map(|n| g.value(n).data().to_vec()).unwrap_or_default();
        ForwardOutput {
            y_hat_g: g.value(self.y_g).item(),
            y_hat_s: self.y_s.map(|n| n.map_or(0.0, |n| g.value(n).item())),
            f_g_star: vec_of(self.f_g),
            f_s_star: self.f_s.map(vec_of),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub y_hat_g: f64,
    pub y_hat_s: [f64; NUM_SUBTASKS],
    pub f_g_star: Vec<f64>,
    pub f_s_star: [Vec<f64>; NUM_SUBTASKS],
}
