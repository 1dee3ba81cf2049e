//! `mmss` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmss::model::InteractionKind;

#[derive(Parser, Debug)]
#[command(
    name = "mmss",
    version,
    about = "Multimodal review helpfulness ranking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus as DIR/{train,dev,test}/manifest.json.
    Synth(SynthArgs),
    /// Train on DIR/{train,dev,test} and write checkpoints and reports.
    Train(TrainArgs),
    /// Score a manifest with a checkpoint.
    Eval(EvalArgs),
    /// Dump the pseudo-label history stored in a checkpoint.
    InspectLabels(InspectArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    products: usize,
    #[arg(long, default_value_t = 8)]
    reviews: usize,
    #[arg(long, default_value_t = 16)]
    d_t: usize,
    #[arg(long, default_value_t = 16)]
    d_roi: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory holding train/, dev/ and test/ manifests.
    #[arg(long, required_unless_present = "show_config")]
    data: Option<PathBuf>,
    /// JSON config; CLI flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent seeds, starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    /// Drop a subtask (repeatable).
    #[arg(long, value_parser = parse_subtask)]
    ablate: Vec<InteractionKind>,
    #[arg(long)]
    disable_ssp: bool,
    #[arg(long)]
    direct_concat: bool,
    /// MAP relevance threshold.
    #[arg(long)]
    tau: Option<u8>,
    #[arg(long)]
    clamp_labels: bool,
    #[arg(long, default_value = "mmss-run")]
    out: PathBuf,
    /// Print the effective configuration and exit.
    #[arg(long)]
    show_config: bool,
    /// Continue from a checkpoint; only --epochs is taken from the flags.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Adds the gold label column.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_parser = parse_subtask)]
    subtask: Option<InteractionKind>,
    #[arg(long)]
    epoch: Option<u32>,
}

fn parse_subtask(s: &str) -> Result<InteractionKind, String> {
    match s.parse::<InteractionKind>() {
        Ok(InteractionKind::Global) | Err(_) => Err(format!(
            "expected one of ptrt, pvrv, ptrv, pvrt, rtrv; got `{s}`"
        )),
        Ok(k) => Ok(k),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::InspectLabels(a) => commands::inspect_labels(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
