use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::trainer::{StepLog, Trainer};
use crate::dataset::ProductRecord;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;

#[derive(Clone, Debug, Default)]
pub struct DataSplits {
    pub train: Vec<ProductRecord>,
    pub dev: Vec<ProductRecord>,
    pub test: Vec<ProductRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochSummary {
    pub epoch: u32,
    pub mean_total: f64,
    pub mean_l_tar: f64,
    pub dev_map: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub seed: u64,
    pub best_epoch: u32,
    pub epochs: Vec<EpochSummary>,
    pub steps: Vec<StepLog>,
    pub best: Checkpoint,
    pub last: Checkpoint,
    /// Reports of the best-on-dev model.
    pub train_report: EvalReport,
    pub dev_report: EvalReport,
    pub test_report: EvalReport,
}

#[derive(Clone, Debug)]
pub struct MultiSeedOutcome {
    pub runs: Vec<RunOutcome>,
    pub mean_dev: EvalReport,
    pub mean_test: EvalReport,
}

pub fn run_training(
    config: &TrainConfig,
    splits: &DataSplits,
    on_epoch: &mut dyn FnMut(&EpochSummary),
) -> Result<RunOutcome> {
    let trainer = Trainer::for_data(config.clone(), &splits.train)?;
    run_training_from(trainer, splits, on_epoch)
}

/// Trains until the configured epoch count, keeping the parameters with
/// the highest dev MAP (earliest on ties). When resuming, selection only
/// considers epochs run in this call.
pub fn run_training_from(
    mut trainer: Trainer,
    splits: &DataSplits,
    on_epoch: &mut dyn FnMut(&EpochSummary),
) -> Result<RunOutcome> {
    if splits.dev.is_empty() || splits.test.is_empty() {
        return Err(Error::contract("dev and test splits must be non-empty"));
    }
    let target = trainer.config().epochs as u32;
    let mut best: Option<(f64, u32, Checkpoint)> = None;
    let mut epochs = Vec::new();
    let mut steps = Vec::new();
    while trainer.epochs_done() < target {
        let logs = trainer.train_epoch(&splits.train)?;
        let n = logs.len().max(1) as f64;
        let dev_map = trainer.evaluate(&splits.dev)?.map_score;
        let summary = EpochSummary {
            epoch: trainer.epochs_done(),
            mean_total: logs.iter().map(|l| l.loss.total).sum::<f64>() / n,
            mean_l_tar: logs.iter().map(|l| l.loss.l_tar).sum::<f64>() / n,
            dev_map,
        };
        on_epoch(&summary);
        if best.as_ref().is_none_or(|(m, _, _)| dev_map > *m) {
            best = Some((dev_map, summary.epoch, trainer.checkpoint()));
        }
        epochs.push(summary);
        steps.extend(logs);
    }
    let last = trainer.checkpoint();
    let (best_epoch, best) = match best {
        Some((_, e, ck)) => (e, ck),
        None => (trainer.epochs_done(), last.clone()),
    };
    let selected = Trainer::from_checkpoint(best.clone())?;
    Ok(RunOutcome {
        seed: trainer.config().seed,
        best_epoch,
        epochs,
        steps,
        train_report: selected.evaluate(&splits.train)?,
        dev_report: selected.evaluate(&splits.dev)?,
        test_report: selected.evaluate(&splits.test)?,
        best,
        last,
    })
}

/// Independent runs with seeds `config.seed, config.seed + 1, …`;
/// reports are averaged with equal weight.
pub fn run_seeds(
    config: &TrainConfig,
    splits: &DataSplits,
    n_seeds: usize,
    on_epoch: &mut dyn FnMut(u64, &EpochSummary),
) -> Result<MultiSeedOutcome> {
    if n_seeds == 0 {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut runs = Vec::with_capacity(n_seeds);
    for k in 0..n_seeds as u64 {
        let seed = config.seed.wrapping_add(k);
        let cfg = TrainConfig {
            seed,
            ..config.clone()
        };
        runs.push(run_training(&cfg, splits, &mut |s| on_epoch(seed, s))?);
    }
    let dev: Vec<EvalReport> = runs.iter().map(|r| r.dev_report.clone()).collect();
    let test: Vec<EvalReport> = runs.iter().map(|r| r.test_report.clone()).collect();
    Ok(MultiSeedOutcome {
        mean_dev: EvalReport::mean(&dev).expect("non-empty"),
        mean_test: EvalReport::mean(&test).expect("non-empty"),
        runs,
    })
}
