//! Optimization loop, model selection and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod run;
mod step;
mod trainer;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::Checkpoint;
pub use config::{Ablation, TrainConfig};
pub use run::{
    run_seeds, run_training, run_training_from, DataSplits, EpochSummary, MultiSeedOutcome,
    RunOutcome,
};
pub use step::{batch_loss, forward_batch, BatchLossNodes};
pub use trainer::{StepLog, Trainer};
