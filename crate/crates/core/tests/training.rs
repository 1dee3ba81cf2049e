use std::path::Path;

use mmss::dataset::{make_synthetic, make_synthetic_splits, SyntheticSpec};
use mmss::model::InteractionKind;
use mmss::train::{run_training, Checkpoint, DataSplits, TrainConfig, Trainer};

fn spec() -> SyntheticSpec {
    SyntheticSpec {
        n_products: 3,
        reviews_per_product: 6,
        d_t: 6,
        d_roi: 5,
        ..SyntheticSpec::default()
    }
}

fn config() -> TrainConfig {
    TrainConfig {
        epochs: 4,
        learning_rate: 1e-3,
        batch_size: 4,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn identical_seeds_give_identical_logs() {
    let data = make_synthetic(&spec()).unwrap();
    let run = || {
        let mut t = Trainer::for_data(config(), &data).unwrap();
        (0..3)
            .flat_map(|_| t.train_epoch(&data).unwrap())
            .collect::<Vec<_>>()
    };
    let a = run();
    assert_eq!(a, run());
    let mut other = config();
    other.seed = 12;
    let mut t = Trainer::for_data(other, &data).unwrap();
    assert_ne!(t.train_epoch(&data).unwrap(), a[..a.len() / 3].to_vec());
}

#[test]
fn resume_from_checkpoint_is_bit_identical() {
    let data = make_synthetic(&spec()).unwrap();
    let mut straight = Trainer::for_data(config(), &data).unwrap();
    straight.train_epoch(&data).unwrap();
    straight.train_epoch(&data).unwrap();
    let want = straight.train_epoch(&data).unwrap();

    let mut first = Trainer::for_data(config(), &data).unwrap();
    first.train_epoch(&data).unwrap();
    first.train_epoch(&data).unwrap();
    let bytes = first.checkpoint().encode().unwrap();
    let restored = Checkpoint::decode(&bytes, Path::new("mem")).unwrap();
    let mut resumed = Trainer::from_checkpoint(restored).unwrap();
    assert_eq!(resumed.epochs_done(), 2);
    let got = resumed.train_epoch(&data).unwrap();
    assert_eq!(got[0].loss.total.to_bits(), want[0].loss.total.to_bits());
    assert_eq!(got, want);
    assert_eq!(resumed.checkpoint(), straight.checkpoint());
}

#[test]
fn disabled_ssp_total_is_ranking_loss_every_step() {
    let data = make_synthetic(&spec()).unwrap();
    let mut c = config();
    c.ablation.disable_ssp = true;
    let mut t = Trainer::for_data(c, &data).unwrap();
    for _ in 0..3 {
        for step in t.train_epoch(&data).unwrap() {
            assert_eq!(step.loss.total, step.loss.l_tar);
        }
    }
    assert!(t.store().is_empty());
}

#[test]
fn subtask_ablation_removes_one_term_and_keeps_other_etas() {
    let data = make_synthetic(&spec()).unwrap();
    let mut c = config();
    c.ablation.disabled_subtasks = vec![InteractionKind::PtRv];
    let mut t = Trainer::for_data(c, &data).unwrap();
    for _ in 0..3 {
        for step in t.train_epoch(&data).unwrap() {
            let present: Vec<bool> = step
                .loss
                .l_sub_per_task
                .iter()
                .map(Option::is_some)
                .collect();
            assert_eq!(present, [true, true, false, true, true]);
        }
    }
    let eta = t.params().store.get(t.params().log_vars).data().to_vec();
    assert_eq!(
        eta[2], 0.0,
        "the ablated log-variance never receives gradient"
    );
    assert!(eta.iter().enumerate().all(|(j, &e)| j == 2 || e != 0.0));
}

#[test]
fn pseudo_labels_follow_recurrence() {
    let data = make_synthetic(&spec()).unwrap();
    let mut t = Trainer::for_data(config(), &data).unwrap();
    t.train_epoch(&data).unwrap();
    t.train_epoch(&data).unwrap();
    let id = &data[0].reviews[0].review_id;
    let rows: Vec<_> = t
        .store()
        .history()
        .iter()
        .filter(|r| &r.review_id == id && r.subtask == InteractionKind::PtRt)
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].epoch, 1);
    assert_eq!(rows[0].value, f64::from(data[0].reviews[0].label));
    assert_eq!(rows[1].epoch, 2);
    assert!(rows[1].value.is_finite());
}

#[test]
fn run_training_selects_best_dev_and_reports() {
    let s = make_synthetic_splits(&spec()).unwrap();
    let splits = DataSplits {
        train: s.train,
        dev: s.dev,
        test: s.test,
    };
    let mut c = config();
    c.ablation.disabled_subtasks = vec![InteractionKind::RtRv];
    let mut seen = Vec::new();
    let out = run_training(&c, &splits, &mut |e| seen.push(e.dev_map)).unwrap();
    assert_eq!(seen.len(), 4);
    let best = seen.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(seen[out.best_epoch as usize - 1], best);
    assert_eq!(out.best.epochs_done(), out.best_epoch);
    assert_eq!(out.last.epochs_done(), 4);
    assert_eq!(out.dev_report.map_score, best);
    for r in [&out.train_report, &out.dev_report, &out.test_report] {
        assert!((0.0..=1.0).contains(&r.map_score));
        assert!(r.ndcg_at(3).is_some() && r.ndcg_at(5).is_some());
    }
}

#[test]
fn zero_epochs_rejected() {
    let data = make_synthetic(&spec()).unwrap();
    let c = TrainConfig {
        epochs: 0,
        ..config()
    };
    assert!(matches!(
        Trainer::for_data(c, &data),
        Err(mmss::Error::Config(_))
    ));
}

#[test]
fn architecture_ablation_trains() {
    let data = make_synthetic(&spec()).unwrap();
    let mut c = config();
    c.ablation.direct_concat = true;
    let mut t = Trainer::for_data(c, &data).unwrap();
    let before = t.ranking_loss(&data).unwrap();
    for _ in 0..3 {
        for step in t.train_epoch(&data).unwrap() {
            assert_eq!(step.loss.total, step.loss.l_tar);
        }
    }
    assert_ne!(t.ranking_loss(&data).unwrap(), before);
}
