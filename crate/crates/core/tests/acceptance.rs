//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to
//! stderr (bypassing the harness capture) and then asserts.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::{check_gradients, oracle_metrics};
use mmss::dataset::{make_synthetic, make_synthetic_splits, ProductRecord, SyntheticSpec};
use mmss::metrics::{average_precision, ndcg_at, RankedEntry, RankedList};
use mmss::model::{InteractionKind, ModelParams};
use mmss::numerics::{Graph, Tensor};
use mmss::objectives::uncertainty_combine_node;
use mmss::ssplabel::{
    mahalanobis_diag, raw_pseudo_label, Anchor, AnchorState, PseudoLabelStore, SspConfig,
};
use mmss::train::{
    batch_loss, forward_batch, run_seeds, Checkpoint, DataSplits, TrainConfig, Trainer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(name: &str, passed: bool, detail: &str, elapsed: Duration) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let line = format!(
        "acceptance [{verdict}] {name}: {detail} ({:.2}s)\n",
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn acceptance_data() -> SyntheticSpec {
    SyntheticSpec {
        n_products: 4,
        reviews_per_product: 8,
        d_t: 16,
        d_roi: 16,
        noise: 0.1,
        seed: 7,
        ..SyntheticSpec::default()
    }
}

#[test]
fn gradient_correctness_full_model() {
    let start = Instant::now();
    let data = make_synthetic(&SyntheticSpec {
        n_products: 1,
        reviews_per_product: 6,
        d_t: 16,
        d_roi: 16,
        seed: 21,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let product = &data[0];
    let reviews: Vec<_> = product.reviews.iter().collect();
    let labels: Vec<u8> = reviews.iter().map(|r| r.label).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let targets: Vec<[f64; 5]> = (0..6)
        .map(|_| std::array::from_fn(|_| rng.random_range(0.0..4.0)))
        .collect();
    let config = TrainConfig::default();
    let mut model = ModelParams::new(config.model_dims(16, 16), config.architecture(), 3).unwrap();
    let log_vars = model.log_vars;
    for (j, v) in model
        .store
        .get_mut(log_vars)
        .data_mut()
        .iter_mut()
        .enumerate()
    {
        *v = 0.3 * j as f64 - 0.5;
    }
    let r = check_gradients(&model, |m, g, b| {
        let fwd = forward_batch(m, g, b, product, &reviews, [true; 5])?;
        Ok(batch_loss(g, b.node(m.log_vars), &fwd, &labels, Some(&targets), 1.0)?.total)
    });
    let elapsed = start.elapsed();
    let ok = r.max_rel < 1e-4 && elapsed < Duration::from_secs(30);
    report(
        "gradient correctness",
        ok,
        &format!(
            "{} entries, max rel err {:.2e}, worst {}",
            r.checked, r.max_rel, r.worst
        ),
        elapsed,
    );
    assert!(ok);
}

#[test]
fn metric_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let items: Vec<(String, f64, u8)> = (0..n)
            .map(|i| {
                (
                    format!("r{:03}", rng.random_range(0..50) * 20 + i),
                    f64::from(rng.random_range(0..6u8)) / 2.0,
                    rng.random_range(0..=4u8),
                )
            })
            .collect();
        let list = RankedList::new(
            items
                .iter()
                .map(|(id, s, l)| RankedEntry {
                    review_id: id.clone(),
                    score: *s,
                    label: *l,
                })
                .collect(),
        )
        .unwrap();
        let o = oracle_metrics(&items, 3);
        worst = worst
            .max((average_precision(&list, 3) - o.ap).abs())
            .max((ndcg_at(&list, 3) - o.ndcg3).abs())
            .max((ndcg_at(&list, 5) - o.ndcg5).abs());
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-12 && elapsed < Duration::from_secs(10);
    report(
        "metric oracles",
        ok,
        &format!("1000 lists, max abs diff {worst:.2e}"),
        elapsed,
    );
    assert!(ok);
}

/// EWMA error after `epochs` updates toward a constant target, starting from
/// gold at epoch 1: each step multiplies it by `(i−1)/(i+1)`, so it ends at
/// `2/(n(n+1))` of the initial gap.
fn ewma_after(y_g: f64, r: f64, epochs: u32) -> f64 {
    let mut store = PseudoLabelStore::new();
    let mut v = 0.0;
    for _ in 0..epochs {
        v = store
            .ewma_update("x", InteractionKind::PtRt, r, y_g)
            .unwrap();
        store.advance_epoch();
    }
    v
}

#[test]
fn pseudo_label_identities() {
    let start = Instant::now();
    let exact = SspConfig {
        eps: 0.0,
        ..SspConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut identity_err: f64 = 0.0;
    for _ in 0..10_000 {
        let y_g = rng.random_range(0.0..=4.0);
        let chi = rng.random_range(1e-6..10.0);
        identity_err = identity_err.max((raw_pseudo_label(&exact, y_g, chi, chi) - y_g).abs());
    }

    let mut first_epoch_exact = true;
    for _ in 0..100 {
        let y_g = f64::from(rng.random_range(0..=4u8));
        let mut store = PseudoLabelStore::new();
        let v = store
            .ewma_update(
                "x",
                InteractionKind::RtRv,
                rng.random_range(-10.0..10.0),
                y_g,
            )
            .unwrap();
        first_epoch_exact &= v == y_g;
    }

    // targets within one label of gold, the regime the offsets live in
    let mut converge_err: f64 = 0.0;
    let mut closed_form_err: f64 = 0.0;
    for y in 0..=4u8 {
        let y_g = f64::from(y);
        for k in -10..=10 {
            let r = y_g + f64::from(k) / 10.0;
            let v15 = ewma_after(y_g, r, 15);
            converge_err = converge_err.max((v15 - r).abs());
            closed_form_err = closed_form_err.max(((v15 - r) - (y_g - r) / 120.0).abs());
        }
    }
    let elapsed = start.elapsed();
    let ok = identity_err <= 1e-12
        && first_epoch_exact
        && converge_err < 1e-2
        && closed_form_err < 1e-12;
    report(
        "pseudo-label identities",
        ok,
        &format!(
            "identity err {identity_err:.1e}, epoch-1 exact {first_epoch_exact}, |y15-r| max {converge_err:.2e} for |r-y_g|<=1"
        ),
        elapsed,
    );
    assert!(ok);
}

#[test]
fn distance_properties() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut state = AnchorState::new(1e-6);
    for _ in 0..12 {
        let rep: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        state
            .accumulate(InteractionKind::PvRt, rng.random_range(0.0..4.0), &rep)
            .unwrap();
    }
    let anchor = state.finalize(InteractionKind::PvRt).unwrap().clone();
    let at_anchor = mahalanobis_diag(&anchor, &anchor.anchor).unwrap();

    let mut euclid_err: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..10);
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let f: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let unit = Anchor {
            anchor: a.clone(),
            diag_var: vec![1.0; d],
            scale: d as f64,
        };
        let euclid = a
            .iter()
            .zip(&f)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        euclid_err = euclid_err
            .max((mahalanobis_diag(&unit, &f).unwrap() - euclid / (d as f64).sqrt()).abs());
    }

    let hand = Anchor {
        anchor: vec![0.0, 0.0],
        diag_var: vec![1.0, 4.0],
        scale: 2.0,
    };
    let hand_value = mahalanobis_diag(&hand, &[1.0, 2.0]).unwrap();
    let elapsed = start.elapsed();
    let ok = at_anchor == 0.0 && euclid_err < 1e-12 && (hand_value - 1.0).abs() < 1e-12;
    report(
        "distance properties",
        ok,
        &format!(
            "at anchor {at_anchor}, unit-variance err {euclid_err:.1e}, hand example {hand_value}"
        ),
        elapsed,
    );
    assert!(ok);
}

fn train_map_and_loss(t: &Trainer, data: &[ProductRecord]) -> (f64, f64) {
    (
        t.evaluate(data).unwrap().map_score,
        t.ranking_loss(data).unwrap(),
    )
}

#[test]
fn overfit_run() {
    let start = Instant::now();
    let data = make_synthetic(&acceptance_data()).unwrap();
    let config = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    let mut t = Trainer::for_data(config, &data).unwrap();
    for _ in 0..30 {
        t.train_epoch(&data).unwrap();
    }
    let (map, loss) = train_map_and_loss(&t, &data);
    let elapsed = start.elapsed();
    let ok = map == 1.0 && loss < 0.05 && elapsed < Duration::from_secs(60);
    report(
        "overfit run",
        ok,
        &format!("train MAP {map:.4}, ranking loss {loss:.4} after 30 epochs at lr 1e-4"),
        elapsed,
    );
    assert!(ok);
}

#[test]
fn ablation_direction() {
    let start = Instant::now();
    let s = make_synthetic_splits(&acceptance_data()).unwrap();
    let splits = DataSplits {
        train: s.train,
        dev: s.dev,
        test: s.test,
    };
    let full_cfg = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    let mut ablated_cfg = full_cfg.clone();
    ablated_cfg.ablation.disable_ssp = true;
    let full = run_seeds(&full_cfg, &splits, 5, &mut |_, _| {})
        .unwrap()
        .mean_test
        .map_score;
    let ablated = run_seeds(&ablated_cfg, &splits, 5, &mut |_, _| {})
        .unwrap()
        .mean_test
        .map_score;
    let elapsed = start.elapsed();
    let ok = full >= ablated;
    report(
        "ablation direction",
        ok,
        &format!("mean test MAP over 5 seeds: full {full:.4}, without pseudo-labels {ablated:.4}"),
        elapsed,
    );
    assert!(ok);
}

#[test]
fn determinism_and_checkpoint_round_trip() {
    let start = Instant::now();
    let data = make_synthetic(&acceptance_data()).unwrap();
    let config = TrainConfig {
        epochs: 4,
        seed: 3,
        ..TrainConfig::default()
    };
    let logs = || {
        let mut t = Trainer::for_data(config.clone(), &data).unwrap();
        (0..4)
            .flat_map(|_| t.train_epoch(&data).unwrap())
            .collect::<Vec<_>>()
    };
    let (a, b) = (logs(), logs());
    let identical_logs = a == b;

    let mut t = Trainer::for_data(config.clone(), &data).unwrap();
    t.train_epoch(&data).unwrap();
    t.train_epoch(&data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    t.checkpoint().save(&path).unwrap();
    let mut resumed = Trainer::from_checkpoint(Checkpoint::load(&path).unwrap()).unwrap();
    let next = resumed.train_epoch(&data).unwrap();
    let uninterrupted = &a[2 * next.len()..3 * next.len()];
    let same_next_loss = next[0].loss.total.to_bits() == uninterrupted[0].loss.total.to_bits();
    let same_epoch = next.as_slice() == uninterrupted;
    let elapsed = start.elapsed();
    let ok = identical_logs && same_next_loss && same_epoch;
    report(
        "determinism and checkpoint round-trip",
        ok,
        &format!(
            "{} steps identical {identical_logs}, resumed next-step loss bit-identical {same_next_loss}",
            a.len()
        ),
        elapsed,
    );
    assert!(ok);
}

#[test]
fn uncertainty_weighting_sanity() {
    let start = Instant::now();
    let held = [2.0, 0.0, 0.0, 0.0, 0.0];
    let mut eta = Tensor::row_vector(vec![0.0; 5]);
    for _ in 0..200 {
        let mut g = Graph::new();
        let e = g.param(eta.clone());
        let losses = held.map(|l| Some(g.constant(Tensor::scalar(l))));
        let total = uncertainty_combine_node(&mut g, &losses, e)
            .unwrap()
            .unwrap();
        g.backward(total).unwrap();
        // only the first task's log-variance is optimized
        eta.data_mut()[0] -= 0.5 * g.grad(e).unwrap().data()[0];
    }
    let got = eta.data()[0];
    let elapsed = start.elapsed();
    let ok = (got - 2f64.ln()).abs() < 1e-3;
    report(
        "uncertainty weighting",
        ok,
        &format!("eta {got:.6} vs ln 2 = {:.6}", 2f64.ln()),
        elapsed,
    );
    assert!(ok);
}
