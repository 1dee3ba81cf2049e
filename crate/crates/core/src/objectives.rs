//! Training objectives: pairwise hinge ranking, tanh-weighted subtask
//! regression and homoscedastic-uncertainty weighting.
//!
//! Each loss has a graph form (used for training) and a plain `f64` form
//! (used for logging and tests).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NUM_SUBTASKS;
use crate::numerics::{Elementwise, Graph, NodeId, Tensor};

/// Indices of two reviews of one product with `label[pos] > label[neg]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankingPair {
    pub pos: usize,
    pub neg: usize,
}

/// Every ordered pair with a strictly higher label first.
pub fn ranking_pairs(labels: &[u8]) -> Vec<RankingPair> {
    let mut pairs = Vec::new();
    for (i, &a) in labels.iter().enumerate() {
        for (j, &b) in labels.iter().enumerate() {
            if a > b {
                pairs.push(RankingPair { pos: i, neg: j });
            }
        }
    }
    pairs
}

/// Mean of `max(0, margin − ŷ⁺ + ŷ⁻)` over all valid pairs; 0 without pairs.
pub fn ranking_loss(scores: &[f64], labels: &[u8], margin: f64) -> f64 {
    let pairs = ranking_pairs(labels);
    if pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs
        .iter()
        .map(|p| (margin - scores[p.pos] + scores[p.neg]).max(0.0))
        .sum();
    total / pairs.len() as f64
}

/// Graph form of [`ranking_loss`]; `scores` are `1 × 1` nodes.
pub fn ranking_loss_node(
    g: &mut Graph,
    scores: &[NodeId],
    labels: &[u8],
    margin: f64,
) -> Result<NodeId> {
    if scores.len() != labels.len() {
        return Err(Error::contract("one label per score required"));
    }
    let pairs = ranking_pairs(labels);
    if pairs.is_empty() {
        return Ok(g.constant(Tensor::scalar(0.0)));
    }
    let n = scores.len();
    let mut selector = vec![0.0; pairs.len() * n];
    for (row, p) in pairs.iter().enumerate() {
        selector[row * n + p.pos] = 1.0;
        selector[row * n + p.neg] = -1.0;
    }
    let selector = g.constant(Tensor::matrix(pairs.len(), n, selector)?);
    let column = g.concat_rows(scores)?;
    let gaps = g.matmul(selector, column)?;
    let neg = g.scale(gaps, -1.0);
    let shortfall = g.add_scalar(neg, margin);
    let hinge = g.map(shortfall, Elementwise::Relu);
    Ok(g.mean(hinge))
}

/// Weight of one sample: `tanh(|y_s − y_g|)`, treated as a constant.
pub fn subtask_weight(pseudo_label: f64, gold: f64) -> f64 {
    (pseudo_label - gold).abs().tanh()
}

/// Mean over the batch of `tanh(|y_s − y_g|) · |ŷ_s − y_s|` for one subtask.
pub fn subtask_loss(predictions: &[f64], pseudo_labels: &[f64], gold: &[f64]) -> f64 {
    let n = predictions.len();
    if n == 0 {
        return 0.0;
    }
    predictions
        .iter()
        .zip(pseudo_labels)
        .zip(gold)
        .map(|((p, y), g)| subtask_weight(*y, *g) * (p - y).abs())
        .sum::<f64>()
        / n as f64
}

/// Graph form of [`subtask_loss`]; gradients flow only into predictions.
pub fn subtask_loss_node(
    g: &mut Graph,
    predictions: &[NodeId],
    pseudo_labels: &[f64],
    gold: &[f64],
) -> Result<NodeId> {
    let n = predictions.len();
    if n == 0 || pseudo_labels.len() != n || gold.len() != n {
        return Err(Error::contract(
            "subtask loss needs equal, non-empty inputs",
        ));
    }
    let preds = g.concat_rows(predictions)?;
    let targets = g.constant(Tensor::matrix(n, 1, pseudo_labels.to_vec())?);
    let weights = pseudo_labels
        .iter()
        .zip(gold)
        .map(|(y, gl)| subtask_weight(*y, *gl))
        .collect();
    let weights = g.constant(Tensor::matrix(n, 1, weights)?);
    let resid = g.sub(preds, targets)?;
    let abs = g.map(resid, Elementwise::Abs);
    let weighted = g.mul(weights, abs)?;
    Ok(g.mean(weighted))
}

/// `Σ_j e^{−η_j} L_j / 2 + η_j / 2` over the tasks present in `losses`.
pub fn uncertainty_combine(
    losses: &[Option<f64>; NUM_SUBTASKS],
    log_vars: &[f64; NUM_SUBTASKS],
) -> f64 {
    losses
        .iter()
        .zip(log_vars)
        .filter_map(|(l, &eta)| l.map(|l| (-eta).exp() * l / 2.0 + eta / 2.0))
        .sum()
}

/// Graph form of [`uncertainty_combine`]; `log_vars` is the `1 × 5` node.
/// Returns `None` when every task is absent.
pub fn uncertainty_combine_node(
    g: &mut Graph,
    losses: &[Option<NodeId>; NUM_SUBTASKS],
    log_vars: NodeId,
) -> Result<Option<NodeId>> {
    let mut total: Option<NodeId> = None;
    for (j, loss) in losses.iter().enumerate() {
        let Some(loss) = *loss else { continue };
        let eta = g.slice_cols(log_vars, j, 1)?;
        let neg = g.scale(eta, -1.0);
        let precision = g.map(neg, Elementwise::Exp);
        let weighted = g.mul(precision, loss)?;
        let weighted = g.scale(weighted, 0.5);
        let reg = g.scale(eta, 0.5);
        let term = g.add(weighted, reg)?;
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    Ok(total)
}

pub fn total_loss(l_tar: f64, l_sub_combined: f64) -> f64 {
    l_tar + l_sub_combined
}

/// Per-step loss components, as logged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_tar: f64,
    /// `None` for ablated or disabled subtasks.
    pub l_sub_per_task: [Option<f64>; NUM_SUBTASKS],
    pub l_sub_combined: f64,
    pub total: f64,
    /// `σ_j = exp(η_j / 2)`.
    pub sigmas: [f64; NUM_SUBTASKS],
}

pub fn sigmas_from_log_vars(log_vars: &[f64]) -> [f64; NUM_SUBTASKS] {
    let mut out = [0.0; NUM_SUBTASKS];
    for (o, eta) in out.iter_mut().zip(log_vars) {
        *o = (eta / 2.0).exp();
    }
    out
}
