use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use mmss::dataset::{
    load_manifest, make_synthetic_splits, write_dataset, ProductRecord, SyntheticSpec,
};
use mmss::train::{
    run_seeds, run_training_from, Checkpoint, DataSplits, EpochSummary, RunOutcome, TrainConfig,
    Trainer,
};
use serde_json::json;

use crate::{EvalArgs, InspectArgs, SynthArgs, TrainArgs};

pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) => m,
        }
    }
}

impl From<mmss::Error> for Failure {
    fn from(e: mmss::Error) -> Self {
        match e {
            mmss::Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Outcome {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(io_fail(Path::new("<stdout>"), e))
        }
        _ => Ok(()),
    }
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Outcome {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    fs::write(path, text + "\n").map_err(|e| io_fail(path, e))
}

pub fn synth(a: SynthArgs) -> Outcome {
    let spec = SyntheticSpec {
        n_products: a.products,
        reviews_per_product: a.reviews,
        d_t: a.d_t,
        d_roi: a.d_roi,
        seed: a.seed,
        noise: a.noise,
        ..SyntheticSpec::default()
    };
    let splits = make_synthetic_splits(&spec)?;
    for (name, records) in [
        ("train", &splits.train),
        ("dev", &splits.dev),
        ("test", &splits.test),
    ] {
        let manifest = write_dataset(&a.out.join(name), records)?;
        emit(&format!(
            "{name}: {} products -> {}\n",
            records.len(),
            manifest.display()
        ))?;
    }
    Ok(())
}

fn effective_config(a: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut c = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_fail(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.epochs {
        c.epochs = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.margin {
        c.margin = v;
    }
    if let Some(v) = a.lr {
        c.learning_rate = v;
    }
    if let Some(v) = a.tau {
        c.metrics.relevance_threshold = v;
    }
    for &k in &a.ablate {
        if !c.ablation.disabled_subtasks.contains(&k) {
            c.ablation.disabled_subtasks.push(k);
        }
    }
    c.ablation.disable_ssp |= a.disable_ssp;
    c.ablation.direct_concat |= a.direct_concat;
    c.ssp.clamp |= a.clamp_labels;
    c.validate()?;
    Ok(c)
}

fn load_split(dir: &Path, name: &str) -> Result<Vec<ProductRecord>, Failure> {
    Ok(load_manifest(&dir.join(name).join("manifest.json"))?.1)
}

fn progress(seed: u64, total: usize) -> impl FnMut(&EpochSummary) {
    move |e: &EpochSummary| {
        eprintln!(
            "seed {seed} epoch {}/{total}  loss {:.4}  l_tar {:.4}  dev MAP {:.4}",
            e.epoch, e.mean_total, e.mean_l_tar, e.dev_map
        );
    }
}

fn write_run(dir: &Path, run: &RunOutcome) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| io_fail(dir, e))?;
    run.best.save(&dir.join("best.ckpt"))?;
    run.last.save(&dir.join("last.ckpt"))?;
    let steps_path = dir.join("steps.jsonl");
    let file = File::create(&steps_path).map_err(|e| io_fail(&steps_path, e))?;
    let mut w = BufWriter::new(file);
    for s in &run.steps {
        let line = serde_json::to_string(s).expect("step logs serialize");
        writeln!(w, "{line}").map_err(|e| io_fail(&steps_path, e))?;
    }
    w.flush().map_err(|e| io_fail(&steps_path, e))?;
    write_json(
        &dir.join("report.json"),
        &json!({
            "seed": run.seed,
            "best_epoch": run.best_epoch,
            "config": run.best.config,
            "epochs": run.epochs,
            "train": run.train_report,
            "dev": run.dev_report,
            "test": run.test_report,
        }),
    )
}

pub fn train(a: TrainArgs) -> Outcome {
    let config = effective_config(&a)?;
    if a.show_config {
        emit(&(serde_json::to_string_pretty(&config).expect("config serializes") + "\n"))?;
        return Ok(());
    }
    if a.seeds == 0 {
        return Err(Failure::Usage("--seeds must be >= 1".into()));
    }
    let data = a.data.as_ref().expect("clap enforces --data");
    let splits = DataSplits {
        train: load_split(data, "train")?,
        dev: load_split(data, "dev")?,
        test: load_split(data, "test")?,
    };

    if let Some(path) = &a.resume {
        let mut ckpt = Checkpoint::load(path)?;
        if let Some(epochs) = a.epochs {
            ckpt.config.epochs = epochs;
        }
        let seed = ckpt.config.seed;
        let total = ckpt.config.epochs;
        let trainer = Trainer::from_checkpoint(ckpt)?;
        eprintln!("resuming after epoch {}", trainer.epochs_done());
        let run = run_training_from(trainer, &splits, &mut progress(seed, total))?;
        write_run(&a.out, &run)?;
        return emit(&run.test_report.table("test"));
    }

    let total = config.epochs;
    let out = run_seeds(&config, &splits, a.seeds, &mut |seed, e| {
        progress(seed, total)(e)
    })?;
    if a.seeds == 1 {
        write_run(&a.out, &out.runs[0])?;
    } else {
        for run in &out.runs {
            write_run(&a.out.join(format!("seed-{}", run.seed)), run)?;
        }
        write_json(
            &a.out.join("report.json"),
            &json!({
                "seeds": out.runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
                "config": config,
                "mean_dev": out.mean_dev,
                "mean_test": out.mean_test,
            }),
        )?;
    }
    fs::create_dir_all(&a.out).map_err(|e| io_fail(&a.out, e))?;
    write_json(&a.out.join("config.json"), &json!(config))?;
    let title = if a.seeds == 1 {
        "test".to_owned()
    } else {
        format!("test (mean of {})", a.seeds)
    };
    emit(&out.mean_test.table(&title))?;
    emit(&format!("outputs in {}\n", a.out.display()))
}

pub fn eval(a: EvalArgs) -> Outcome {
    let trainer = Trainer::from_checkpoint(Checkpoint::load(&a.checkpoint)?)?;
    let (_, records) = load_manifest(&a.manifest)?;
    let report = trainer.evaluate(&records)?;
    emit(&report.table(&a.manifest.display().to_string()))?;
    if let Some(out) = &a.out {
        write_json(out, &json!(report))?;
    }
    Ok(())
}

pub fn inspect_labels(a: InspectArgs) -> Outcome {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let gold: Option<HashMap<String, u8>> = match &a.manifest {
        Some(path) => Some(
            load_manifest(path)?
                .1
                .iter()
                .flat_map(|p| p.reviews.iter().map(|r| (r.review_id.clone(), r.label)))
                .collect(),
        ),
        None => None,
    };
    match write_labels(&a, &ckpt, gold.as_ref()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(io_fail(Path::new("<stdout>"), e))
        }
        _ => Ok(()),
    }
}

/// One row per (review, subtask, epoch) update.
fn write_labels(
    a: &InspectArgs,
    ckpt: &Checkpoint,
    gold: Option<&HashMap<String, u8>>,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(std::io::stdout().lock());
    write!(w, "review_id\tsubtask\tepoch\tpseudo_label")?;
    if gold.is_some() {
        write!(w, "\tgold")?;
    }
    writeln!(w)?;
    for r in ckpt.store.history() {
        if a.subtask.is_some_and(|k| k != r.subtask) || a.epoch.is_some_and(|e| e != r.epoch) {
            continue;
        }
        write!(
            w,
            "{}\t{}\t{}\t{:.6}",
            r.review_id, r.subtask, r.epoch, r.value
        )?;
        if let Some(g) = gold {
            match g.get(&r.review_id) {
                Some(l) => write!(w, "\t{l}")?,
                None => write!(w, "\t-")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()
}
