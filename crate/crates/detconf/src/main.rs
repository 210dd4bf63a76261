//! `detconf`: post-process detector probability maps, score predictions,
//! estimate confidence, build reject curves and simulate active learning.

use clap::{Parser, Subcommand};

use detconf::commands::{al, confidence, extract, features_cmd, reject, rfr, score, synth};
use detconf::settings::load_config;

#[derive(Parser)]
#[command(
    name = "detconf",
    version,
    about = "Confidence estimation toolkit for document object detection",
    propagate_version = true
)]
struct Cli {
    /// Tool configuration file (JSON); flags override its values.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    /// Worker threads for image-level parallelism (output order is fixed
    /// by the manifest either way).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract object predictions from probability maps.
    Extract(extract::ExtractArgs),
    /// Score predictions against ground truth (pixel IoU, mAP).
    Score(score::ScoreArgs),
    /// Compute per-image confidence scores.
    Confidence(confidence::ConfidenceArgs),
    /// Compute object-statistics feature vectors.
    Features(features_cmd::FeaturesArgs),
    /// Train the mAP regressor.
    TrainRfr(rfr::TrainRfrArgs),
    /// Evaluate a trained regressor (MSE).
    EvalRfr(rfr::EvalRfrArgs),
    /// Build reject curves with bootstrap bands and a random baseline.
    RejectCurve(reject::RejectCurveArgs),
    /// Select the least confident images for annotation.
    AlSelect(al::AlSelectArgs),
    /// Simulate the active-learning loop against a synthetic detector.
    AlSimulate(al::AlSimulateArgs),
    /// Generate a synthetic corpus (ground truth + corrupted maps).
    Synth(synth::SynthArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.jobs == 0 {
        anyhow::bail!("--jobs must be at least 1");
    }
    let config = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Extract(args) => extract::run(args, &config, cli.jobs),
        Command::Score(args) => score::run(args, &config, cli.jobs),
        Command::Confidence(args) => confidence::run(args, &config, cli.jobs),
        Command::Features(args) => features_cmd::run(args, &config, cli.jobs),
        Command::TrainRfr(args) => rfr::run_train(args, &config),
        Command::EvalRfr(args) => rfr::run_eval(args),
        Command::RejectCurve(args) => reject::run(args),
        Command::AlSelect(args) => al::run_select(args),
        Command::AlSimulate(args) => al::run_simulate(args, &config),
        Command::Synth(args) => synth::run(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error:#}");
        std::process::exit(2);
    }
}
