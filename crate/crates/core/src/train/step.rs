//! Graph construction for one list-wise batch.

use crate::blocks::Bound;
use crate::dataset::{ProductRecord, ReviewRecord};
use crate::error::{Error, Result};
use crate::model::{FeatureBundle, ForwardNodes, ModelParams, NUM_SUBTASKS};
use crate::numerics::{Graph, NodeId};
use crate::objectives::{ranking_loss_node, subtask_loss_node, uncertainty_combine_node};

/// Forward pass for every review of a batch against its product.
pub fn forward_batch(
    params: &ModelParams,
    g: &mut Graph,
    bound: &Bound,
    product: &ProductRecord,
    reviews: &[&ReviewRecord],
    active: [bool; NUM_SUBTASKS],
) -> Result<Vec<ForwardNodes>> {
    reviews
        .iter()
        .map(|r| params.forward_nodes(g, bound, &FeatureBundle::new(product, r), active))
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct BatchLossNodes {
    pub l_tar: NodeId,
    pub l_sub: [Option<NodeId>; NUM_SUBTASKS],
    pub l_sub_combined: Option<NodeId>,
    pub total: NodeId,
}

/// Ranking loss plus, when `targets` is given, the uncertainty-weighted
/// subtask losses. `targets[i][s]` is the pseudo-label of review `i` for
/// subtask `s` and is only read where the forward pass produced `y_s`.
pub fn batch_loss(
    g: &mut Graph,
    log_vars: NodeId,
    forwards: &[ForwardNodes],
    labels: &[u8],
    targets: Option<&[[f64; NUM_SUBTASKS]]>,
    margin: f64,
) -> Result<BatchLossNodes> {
    if forwards.len() != labels.len() {
        return Err(Error::contract("one label per forward pass required"));
    }
    let scores: Vec<NodeId> = forwards.iter().map(|f| f.y_g).collect();
    let l_tar = ranking_loss_node(g, &scores, labels, margin)?;
    let mut l_sub = [None; NUM_SUBTASKS];
    if let Some(targets) = targets {
        if targets.len() != forwards.len() {
            return Err(Error::contract("one target row per forward pass required"));
        }
        let gold: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
        for (s, slot) in l_sub.iter_mut().enumerate() {
            let preds: Option<Vec<NodeId>> = forwards.iter().map(|f| f.y_s[s]).collect();
            let Some(preds) = preds else { continue };
            let pseudo: Vec<f64> = targets.iter().map(|t| t[s]).collect();
            *slot = Some(subtask_loss_node(g, &preds, &pseudo, &gold)?);
        }
    }
    let l_sub_combined = uncertainty_combine_node(g, &l_sub, log_vars)?;
    let total = match l_sub_combined {
        Some(c) => g.add(l_tar, c)?,
        None => l_tar,
    };
    Ok(BatchLossNodes {
        l_tar,
        l_sub,
        l_sub_combined,
        total,
    })
}
