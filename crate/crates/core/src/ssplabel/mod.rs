//! Self-supervised pseudo-labels for the five interaction subtasks.
//!
//! Each subtask target starts at the gold helpfulness score and is then
//! pulled by the offset between the subtask's and the global task's
//! distances to their anchors, smoothed across epochs by an EWMA with
//! `β = 2/(i+1)`.

mod anchor;
mod store;

use serde::{Deserialize, Serialize};

pub use anchor::{mahalanobis_diag, Accumulator, Anchor, AnchorState};
pub use store::{LabelRecord, PseudoLabelStore};

use crate::dataset::MAX_LABEL;
use crate::error::{Error, Result};
use crate::model::InteractionKind;

pub(crate) const NUM_TASKS: usize = 6;

/// Global plus the five subtasks.
pub const TASKS: [InteractionKind; NUM_TASKS] = [
    InteractionKind::Global,
    InteractionKind::PtRt,
    InteractionKind::PvRv,
    InteractionKind::PtRv,
    InteractionKind::PvRt,
    InteractionKind::RtRv,
];

pub(crate) fn task_index(kind: InteractionKind) -> usize {
    kind.subtask_index().map_or(0, |s| s + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SspConfig {
    /// Coefficient of the ratio (multiplicative) term.
    pub alpha1: f64,
    /// Coefficient of the distance-difference (subtractive) term.
    pub alpha2: f64,
    /// Denominator guard.
    pub eps: f64,
    /// Floor on per-dimension variance.
    pub lambda_reg: f64,
    /// Clamp pseudo-labels into the gold label range.
    pub clamp: bool,
}

impl Default for SspConfig {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            eps: 1e-8,
            lambda_reg: 1e-6,
            clamp: false,
        }
    }
}

impl SspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Config(format!(
                "ssp eps must be > 0, got {}",
                self.eps
            )));
        }
        if self.lambda_reg.is_nan() || self.lambda_reg <= 0.0 {
            return Err(Error::Config(format!(
                "ssp lambda_reg must be > 0, got {}",
                self.lambda_reg
            )));
        }
        Ok(())
    }
}

/// Subtask target from the gold score and the two anchor distances:
///
/// `(y_g + α2(χ_s − χ_g))/2 + α1·χ_s·y_g / (2(χ_g + ε))`
pub fn raw_pseudo_label(config: &SspConfig, y_g: f64, chi_g: f64, chi_s: f64) -> f64 {
    let subtractive = (y_g + config.alpha2 * (chi_s - chi_g)) / 2.0;
    let multiplicative = config.alpha1 * chi_s * y_g / (2.0 * (chi_g + config.eps));
    let y = subtractive + multiplicative;
    if config.clamp {
        y.clamp(0.0, f64::from(MAX_LABEL))
    } else {
        y
    }
}

/// `δ_gs`, the correction added to the gold label.
pub fn offset(config: &SspConfig, y_g: f64, chi_g: f64, chi_s: f64) -> f64 {
    raw_pseudo_label(config, y_g, chi_g, chi_s) - y_g
}

/// Closes an epoch: installs freshly finalized anchors for the next epoch
/// and moves the store to the next EWMA step.
pub fn advance_epoch(store: &mut PseudoLabelStore, anchors: &mut AnchorState) -> Result<()> {
    anchors.finish_epoch()?;
    store.advance_epoch();
    Ok(())
}
