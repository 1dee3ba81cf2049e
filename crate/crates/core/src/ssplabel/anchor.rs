use serde::{Deserialize, Serialize};

use super::{task_index, NUM_TASKS, TASKS};
use crate::error::{Error, Result};
use crate::model::InteractionKind;
use crate::numerics::sigmoid;

/// Finalized reference point of one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    /// Sigmoid(label)-weighted mean representation.
    pub anchor: Vec<f64>,
    /// Per-dimension population variance, floored at the regularizer.
    pub diag_var: Vec<f64>,
    /// Distance normalizer; the representation width.
    pub scale: f64,
}

/// Running sums for one task within one epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub count: u64,
    pub weight_sum: f64,
    pub weighted_feature_sum: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Accumulator {
    fn push(&mut self, weight: f64, rep: &[f64]) -> Result<()> {
        if self.count == 0 {
            self.weighted_feature_sum = vec![0.0; rep.len()];
            self.mean = vec![0.0; rep.len()];
            self.m2 = vec![0.0; rep.len()];
        } else if rep.len() != self.mean.len() {
            return Err(Error::contract(format!(
                "representation width {} does not match accumulated width {}",
                rep.len(),
                self.mean.len()
            )));
        }
        self.count += 1;
        self.weight_sum += weight;
        let n = self.count as f64;
        for (d, &x) in rep.iter().enumerate() {
            self.weighted_feature_sum[d] += weight * x;
            // Welford update
            let delta = x - self.mean[d];
            self.mean[d] += delta / n;
            self.m2[d] += delta * (x - self.mean[d]);
        }
        Ok(())
    }
}

/// Per-task anchors: one epoch's accumulators plus the anchors finalized at
/// the end of the previous epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorState {
    lambda_reg: f64,
    accumulators: Vec<Accumulator>,
    finalized: Vec<Option<Anchor>>,
}

impl AnchorState {
    pub fn new(lambda_reg: f64) -> Self {
        Self {
            lambda_reg,
            accumulators: vec![Accumulator::default(); NUM_TASKS],
            finalized: vec![None; NUM_TASKS],
        }
    }

    /// Adds one sample with weight `sigmoid(label)`.
    pub fn accumulate(
        &mut self,
        task: InteractionKind,
        label: f64,
        representation: &[f64],
    ) -> Result<()> {
        if representation.is_empty() {
            return Err(Error::contract("empty representation"));
        }
        self.accumulators[task_index(task)].push(sigmoid(label), representation)
    }

    pub fn accumulator(&self, task: InteractionKind) -> &Accumulator {
        &self.accumulators[task_index(task)]
    }

    /// Computes the task's anchor from the current accumulator and installs
    /// it as the active anchor.
    pub fn finalize(&mut self, task: InteractionKind) -> Result<&Anchor> {
        let k = task_index(task);
        let acc = &self.accumulators[k];
        if acc.count == 0 {
            return Err(Error::contract(format!(
                "no samples accumulated for task {task}"
            )));
        }
        let n = acc.count as f64;
        let anchor = acc
            .weighted_feature_sum
            .iter()
            .map(|s| s / acc.weight_sum)
            .collect::<Vec<_>>();
        let diag_var = acc
            .m2
            .iter()
            .map(|m| (m / n).max(self.lambda_reg))
            .collect();
        let scale = anchor.len() as f64;
        self.finalized[k] = Some(Anchor {
            anchor,
            diag_var,
            scale,
        });
        Ok(self.finalized[k].as_ref().expect("just set"))
    }

    /// Finalizes every task that saw samples, then clears the accumulators.
    /// Tasks without samples keep their previous anchor.
    pub fn finish_epoch(&mut self) -> Result<()> {
        for task in TASKS {
            if self.accumulators[task_index(task)].count > 0 {
                self.finalize(task)?;
            }
        }
        self.accumulators
            .iter_mut()
            .for_each(|a| *a = Accumulator::default());
        Ok(())
    }

    pub fn anchor(&self, task: InteractionKind) -> Option<&Anchor> {
        self.finalized[task_index(task)].as_ref()
    }

    /// Variance-normalized distance to the task anchor:
    /// `sqrt(Σ_d (f_d − A_d)² / var_d) / sqrt(s_k)`.
    pub fn distance(&self, task: InteractionKind, representation: &[f64]) -> Result<f64> {
        let anchor = self
            .anchor(task)
            .ok_or_else(|| Error::contract(format!("anchor for task {task} is not finalized")))?;
        mahalanobis_diag(anchor, representation)
    }
}

pub fn mahalanobis_diag(anchor: &Anchor, representation: &[f64]) -> Result<f64> {
    if representation.len() != anchor.anchor.len() {
        return Err(Error::contract(format!(
            "representation width {} does not match anchor width {}",
            representation.len(),
            anchor.anchor.len()
        )));
    }
    let quad: f64 = representation
        .iter()
        .zip(&anchor.anchor)
        .zip(&anchor.diag_var)
        .map(|((f, a), v)| (f - a) * (f - a) / v)
        .sum();
    Ok(quad.sqrt() / anchor.scale.sqrt())
}
