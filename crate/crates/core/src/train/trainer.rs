use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::step::{batch_loss, forward_batch};
use crate::dataset::{batch_by_product, Batch, ProductRecord, ReviewRecord};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{FeatureBundle, ForwardNodes, InteractionKind, ModelParams, NUM_SUBTASKS};
use crate::numerics::{Graph, Tensor};
use crate::objectives::{sigmas_from_log_vars, LossBreakdown};
use crate::ssplabel::{self, raw_pseudo_label, AnchorState, PseudoLabelStore};

/// One line of the per-step training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: u32,
    pub batch: usize,
    pub product_id: String,
    pub n_reviews: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

/// Model, optimizer and pseudo-label state advanced one epoch at a time.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    params: ModelParams,
    adam: AdamState,
    store: PseudoLabelStore,
    anchors: AnchorState,
}

fn epoch_shuffle_seed(seed: u64, epoch: u32) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ u64::from(epoch).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

impl Trainer {
    pub fn new(config: TrainConfig, d_t: usize, d_roi: usize) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::new(
            config.model_dims(d_t, d_roi),
            config.architecture(),
            config.seed,
        )?;
        let adam = AdamState::new(&params.store);
        let anchors = AnchorState::new(config.ssp.lambda_reg);
        Ok(Self {
            config,
            params,
            adam,
            store: PseudoLabelStore::new(),
            anchors,
        })
    }

    /// Sizes the model from the first product's feature widths.
    pub fn for_data(config: TrainConfig, data: &[ProductRecord]) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| Error::contract("training set is empty"))?;
        Self::new(
            config,
            first.text_features.cols(),
            first.image_features.cols(),
        )
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        let expected = ckpt.config.model_dims(ckpt.dims.d_t, ckpt.dims.d_roi);
        if expected != ckpt.dims || ckpt.architecture != ckpt.config.architecture() {
            return Err(Error::contract("checkpoint dims disagree with its config"));
        }
        let mut params = ModelParams::new(ckpt.dims, ckpt.architecture, ckpt.config.seed)?;
        params.store.load_values(ckpt.params)?;
        let shapes_match = |moments: &[Tensor]| {
            moments.len() == params.store.len()
                && moments
                    .iter()
                    .zip(params.store.values())
                    .all(|(m, p)| m.dims() == p.dims())
        };
        if !shapes_match(&ckpt.adam.m) || !shapes_match(&ckpt.adam.v) {
            return Err(Error::contract("optimizer moments do not match parameters"));
        }
        Ok(Self {
            config: ckpt.config,
            params,
            adam: ckpt.adam,
            store: ckpt.store,
            anchors: ckpt.anchors,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            dims: self.params.dims,
            architecture: self.params.architecture,
            params: self.params.store.values().to_vec(),
            adam: self.adam.clone(),
            store: self.store.clone(),
            anchors: self.anchors.clone(),
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn store(&self) -> &PseudoLabelStore {
        &self.store
    }

    pub fn anchors(&self) -> &AnchorState {
        &self.anchors
    }

    pub fn epochs_done(&self) -> u32 {
        self.store.epoch() - 1
    }

    /// One pass over `data` in list-wise batches, then closes the epoch.
    pub fn train_epoch(&mut self, data: &[ProductRecord]) -> Result<Vec<StepLog>> {
        let epoch = self.store.epoch();
        let batches = batch_by_product(
            data,
            self.config.batch_size,
            Some(epoch_shuffle_seed(self.config.seed, epoch)),
        )?;
        let mut logs = Vec::with_capacity(batches.len());
        for (i, batch) in batches.iter().enumerate() {
            logs.push(self.train_batch(data, batch, i)?);
        }
        ssplabel::advance_epoch(&mut self.store, &mut self.anchors)?;
        Ok(logs)
    }

    fn train_batch(
        &mut self,
        data: &[ProductRecord],
        batch: &Batch,
        index: usize,
    ) -> Result<StepLog> {
        let product = &data[batch.product];
        let reviews: Vec<&ReviewRecord> =
            batch.reviews.iter().map(|&i| &product.reviews[i]).collect();
        let active = self.config.active_subtasks();
        let mut g = Graph::new();
        let bound = self.params.store.bind(&mut g);
        let forwards = forward_batch(&self.params, &mut g, &bound, product, &reviews, active)?;
        let labels: Vec<u8> = reviews.iter().map(|r| r.label).collect();
        let targets = if self.config.ssp_enabled() {
            Some(self.pseudo_targets(&g, &forwards, &reviews)?)
        } else {
            None
        };
        let log_vars = bound.node(self.params.log_vars);
        let nodes = batch_loss(
            &mut g,
            log_vars,
            &forwards,
            &labels,
            targets.as_deref(),
            self.config.margin,
        )?;
        g.backward(nodes.total)?;

        let item = |n| g.value(n).item();
        let loss = LossBreakdown {
            l_tar: item(nodes.l_tar),
            l_sub_per_task: nodes.l_sub.map(|n| n.map(item)),
            l_sub_combined: nodes.l_sub_combined.map_or(0.0, item),
            total: item(nodes.total),
            sigmas: sigmas_from_log_vars(self.params.store.get(self.params.log_vars).data()),
        };
        let mut grads: Vec<Tensor> = bound.nodes().iter().map(|&n| g.grad_or_zeros(n)).collect();
        adam_step(
            &mut self.params.store,
            &mut grads,
            &mut self.adam,
            self.config.learning_rate,
        )?;
        Ok(StepLog {
            epoch: self.store.epoch(),
            batch: index,
            product_id: product.product_id.clone(),
            n_reviews: reviews.len(),
            loss,
        })
    }

    /// Updates pseudo-labels for the batch and feeds this epoch's anchor
    /// accumulators. Distances use the anchors closed at the previous epoch.
    fn pseudo_targets(
        &mut self,
        g: &Graph,
        forwards: &[ForwardNodes],
        reviews: &[&ReviewRecord],
    ) -> Result<Vec<[f64; NUM_SUBTASKS]>> {
        let epoch = self.store.epoch();
        let mut out = Vec::with_capacity(reviews.len());
        for (f, r) in forwards.iter().zip(reviews) {
            let y_g = f64::from(r.label);
            let f_g = f
                .f_g
                .map(|n| g.value(n).data())
                .ok_or_else(|| Error::contract("pseudo-labels need the fused representation"))?;
            let chi_g = if epoch > 1 {
                Some(self.anchors.distance(InteractionKind::Global, f_g)?)
            } else {
                None
            };
            let mut row = [y_g; NUM_SUBTASKS];
            for (s, kind) in InteractionKind::SUBTASKS.into_iter().enumerate() {
                let Some(node) = f.f_s[s] else { continue };
                let rep = g.value(node).data();
                let previous = self.store.get(&r.review_id, kind).unwrap_or(y_g);
                let raw = match chi_g {
                    Some(chi_g) => {
                        let chi_s = self.anchors.distance(kind, rep)?;
                        raw_pseudo_label(&self.config.ssp, y_g, chi_g, chi_s)
                    }
                    None => y_g,
                };
                row[s] = self.store.ewma_update(&r.review_id, kind, raw, y_g)?;
                self.anchors.accumulate(kind, previous, rep)?;
            }
            self.anchors.accumulate(InteractionKind::Global, y_g, f_g)?;
            out.push(row);
        }
        Ok(out)
    }

    /// Global score for every review, keyed by review id.
    pub fn predict(&self, data: &[ProductRecord]) -> Result<HashMap<String, f64>> {
        let mut out = HashMap::new();
        for p in data {
            for r in &p.reviews {
                out.insert(
                    r.review_id.clone(),
                    self.params.score(&FeatureBundle::new(p, r))?,
                );
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self, data: &[ProductRecord]) -> Result<EvalReport> {
        evaluate(data, &self.predict(data)?, &self.config.metrics)
    }

    /// Mean ranking loss over un-shuffled batches, parameters untouched.
    pub fn ranking_loss(&self, data: &[ProductRecord]) -> Result<f64> {
        let batches = batch_by_product(data, self.config.batch_size, None)?;
        let mut total = 0.0;
        for batch in &batches {
            let product = &data[batch.product];
            let mut scores = Vec::with_capacity(batch.reviews.len());
            let mut labels = Vec::with_capacity(batch.reviews.len());
            for &i in &batch.reviews {
                let r = &product.reviews[i];
                scores.push(self.params.score(&FeatureBundle::new(product, r))?);
                labels.push(r.label);
            }
            total += crate::objectives::ranking_loss(&scores, &labels, self.config.margin);
        }
        Ok(total / batches.len() as f64)
    }
}
