use std::path::Path;
use std::process::{Command, Output};

fn mmss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmss"))
        .args(args)
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn synth(dir: &Path) {
    let out = mmss(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--products",
        "3",
        "--reviews",
        "5",
        "--d-t",
        "6",
        "--d-roi",
        "4",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
}

#[test]
fn no_args_prints_usage_and_exits_1() {
    let out = mmss(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_exits_1() {
    let out = mmss(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("Usage"));
}

#[test]
fn help_exits_0() {
    assert_eq!(mmss(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_ablation_name_is_usage_error() {
    let out = mmss(&["train", "--show-config", "--ablate", "global"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn show_config_prints_defaults() {
    let out = mmss(&[
        "train",
        "--show-config",
        "--lr",
        "0.002",
        "--ablate",
        "rtrv",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["learning_rate"], 0.002);
    assert_eq!(v["batch_size"], 32);
    assert_eq!(v["margin"], 1.0);
    assert_eq!(v["ablation"]["disabled_subtasks"][0], "rtrv");
}

#[test]
fn invalid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let data = dir.path().to_str().unwrap();
    assert_eq!(
        mmss(&["train", "--data", data, "--epochs", "0"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        mmss(&["train", "--data", data, "--batch-size", "1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn missing_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmss(&["train", "--data", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = mmss(&[
        "eval",
        "--checkpoint",
        "nope.ckpt",
        "--manifest",
        "nope.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_label_in_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let manifest = dir.path().join("train").join("manifest.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    v["products"][0]["reviews"][0]["label"] = 5.into();
    let id = v["products"][0]["reviews"][0]["review_id"]
        .as_str()
        .unwrap()
        .to_owned();
    std::fs::write(&manifest, v.to_string()).unwrap();
    let out = mmss(&[
        "train",
        "--data",
        dir.path().to_str().unwrap(),
        "--epochs",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains(&id));
}

#[test]
fn synth_train_eval_inspect_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    synth(&dir.path().join("data"));
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let out = mmss(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "2",
        "--lr",
        "0.001",
        "--ablate",
        "rtrv",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("MAP") && stdout.contains("N@3") && stdout.contains("N@5"));
    for f in [
        "best.ckpt",
        "last.ckpt",
        "report.json",
        "steps.jsonl",
        "config.json",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let steps = std::fs::read_to_string(run.join("steps.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(steps.lines().next().unwrap()).unwrap();
    assert_eq!(first["l_sub_per_task"].as_array().unwrap().len(), 5);
    assert!(first["l_sub_per_task"][4].is_null());
    // 3 products of 5 reviews, one batch each, two epochs
    assert_eq!(steps.lines().count(), 6);

    let report = dir.path().join("eval.json");
    let out = mmss(&[
        "eval",
        "--checkpoint",
        run.join("best.ckpt").to_str().unwrap(),
        "--manifest",
        data.join("test/manifest.json").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert!(v["map_score"].is_f64());

    let out = mmss(&[
        "inspect-labels",
        "--checkpoint",
        run.join("last.ckpt").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let listing = text(&out.stdout);
    let rows: Vec<&str> = listing.lines().skip(1).collect();
    // 15 reviews × 4 active subtasks × 2 epochs
    assert_eq!(rows.len(), 15 * 4 * 2);
    let mut keys: Vec<(String, String, String)> = rows
        .iter()
        .map(|r| {
            let c: Vec<&str> = r.split('\t').collect();
            (c[0].to_owned(), c[1].to_owned(), c[2].to_owned())
        })
        .collect();
    keys.sort();
    keys.dedup();
    assert_eq!(
        keys.len(),
        rows.len(),
        "one row per (review, subtask, epoch)"
    );
}

#[test]
fn resume_continues_to_requested_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let run = dir.path().join("run");
    let out = mmss(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "1",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let resumed = dir.path().join("resumed");
    let out = mmss(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--resume",
        run.join("last.ckpt").to_str().unwrap(),
        "--epochs",
        "3",
        "--out",
        resumed.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let steps = std::fs::read_to_string(resumed.join("steps.jsonl")).unwrap();
    let epochs: Vec<u64> = steps
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["epoch"]
                .as_u64()
                .unwrap()
        })
        .collect();
    assert_eq!(epochs, [2, 2, 2, 3, 3, 3]);
}

#[test]
fn multiple_seeds_write_mean_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let run = dir.path().join("run");
    let out = mmss(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "1",
        "--seeds",
        "2",
        "--seed",
        "5",
        "--disable-ssp",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(run.join("seed-5/best.ckpt").exists() && run.join("seed-6/best.ckpt").exists());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(v["seeds"], serde_json::json!([5, 6]));
    assert!(v["mean_test"]["map_score"].is_f64());
}
