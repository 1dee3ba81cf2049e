use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::MetricOptions;
use crate::model::{Architecture, InteractionKind, ModelDims, NUM_SUBTASKS};
use crate::ssplabel::SspConfig;

/// Switches for the ablation variants.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Subtasks whose heads and losses are removed.
    pub disabled_subtasks: Vec<InteractionKind>,
    /// Train on the ranking loss alone; no pseudo-labels.
    pub disable_ssp: bool,
    /// Replace the interaction encoders by pooled-feature concatenation.
    pub direct_concat: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Hidden widths; `None` means "same as the text feature width".
    pub d_v: Option<usize>,
    pub d_f: Option<usize>,
    pub d_g: Option<usize>,
    pub heads: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub margin: f64,
    pub epochs: usize,
    pub seed: u64,
    pub ssp: SspConfig,
    pub ablation: Ablation,
    pub metrics: MetricOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d_v: None,
            d_f: None,
            d_g: None,
            heads: 1,
            learning_rate: 1e-4,
            batch_size: 32,
            margin: 1.0,
            epochs: 30,
            seed: 0,
            ssp: SspConfig::default(),
            ablation: Ablation::default(),
            metrics: MetricOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.margin.is_nan() || self.margin <= 0.0 {
            return Err(Error::Config(format!(
                "margin must be > 0, got {}",
                self.margin
            )));
        }
        if self.heads == 0 {
            return Err(Error::Config("heads must be >= 1".into()));
        }
        if self.metrics.ndcg_cutoffs.contains(&0) {
            return Err(Error::Config("NDCG cutoffs must be >= 1".into()));
        }
        if self
            .ablation
            .disabled_subtasks
            .contains(&InteractionKind::Global)
        {
            return Err(Error::Config("the global task cannot be ablated".into()));
        }
        self.ssp.validate()
    }

    pub fn architecture(&self) -> Architecture {
        if self.ablation.direct_concat {
            Architecture::DirectConcat
        } else {
            Architecture::Interaction
        }
    }

    pub fn model_dims(&self, d_t: usize, d_roi: usize) -> ModelDims {
        ModelDims {
            d_t,
            d_roi,
            d_v: self.d_v.unwrap_or(d_t),
            d_f: self.d_f.unwrap_or(d_t),
            d_g: self.d_g.unwrap_or(d_t),
            heads: self.heads,
        }
    }

    /// Subtasks that are trained, taking every ablation switch into account.
    pub fn active_subtasks(&self) -> [bool; NUM_SUBTASKS] {
        if self.ablation.disable_ssp || self.ablation.direct_concat {
            return [false; NUM_SUBTASKS];
        }
        InteractionKind::SUBTASKS.map(|k| !self.ablation.disabled_subtasks.contains(&k))
    }

    pub fn ssp_enabled(&self) -> bool {
        self.active_subtasks().iter().any(|&a| a)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
