//! `al-select` and `al-simulate`: annotation selection and the synthetic
//! active-learning loop.

use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::Args;

use detconf_core::active_learning::{generate_corpus, select, simulate, SimulationConfig};

use crate::header::Header;
use crate::settings::{
    load_simulation_spec, parse_policy, parse_sim_estimator, resolve_corpus, resolve_detector,
    resolve_map, ConfigFile,
};
use crate::tables::{fmt_f64, read_confidence_csv, render_csv, write_file};

#[derive(Debug, Args)]
pub struct AlSelectArgs {
    /// Confidence CSV from the `confidence` command.
    #[arg(long)]
    pub scores: PathBuf,
    /// `threshold:<value>` or `budget:<count>`.
    #[arg(long)]
    pub policy: String,
    /// Output CSV with the selected image ids.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_select(args: &AlSelectArgs) -> Result<()> {
    let scores = read_confidence_csv(&args.scores)?;
    let policy = parse_policy(&args.policy)?;
    let selection = select(&scores, &policy).map_err(|e| anyhow!(e))?;

    let mut header = Header::new("al-select")
        .config("policy", &args.policy)
        .config("estimator", scores[0].estimator.name());
    if selection.truncated {
        header = header.note("warning: budget exceeds pool size; selected the whole pool");
    }
    let rows: Vec<Vec<String>> = selection.ids.iter().map(|id| vec![id.clone()]).collect();
    write_file(&args.out, &render_csv(&header, &["image_id"], &rows))?;
    println!(
        "selected {} of {} images -> {}{}",
        selection.ids.len(),
        scores.len(),
        args.out.display(),
        if selection.truncated {
            " (budget exceeded pool size)"
        } else {
            ""
        }
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct AlSimulateArgs {
    /// Simulation spec (JSON): corpus, detector, estimator, policy.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Number of annotation rounds.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Master seed for selection streams (overrides the spec file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Estimator: random|oracle|pce|dap|dov (overrides the spec file).
    #[arg(long)]
    pub estimator: Option<String>,
    /// Policy (overrides the spec file).
    #[arg(long)]
    pub policy: Option<String>,
    /// Dropout ensemble size for dap/dov.
    #[arg(long)]
    pub ensemble: Option<usize>,
    /// Output CSV, one row per iteration.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_simulate(args: &AlSimulateArgs, config: &ConfigFile) -> Result<()> {
    let spec = load_simulation_spec(args.spec.as_deref())?;
    let corpus_params = resolve_corpus(spec.corpus.as_ref());
    let detector = resolve_detector(spec.detector.as_ref());
    let estimator_name = args
        .estimator
        .clone()
        .or(spec.estimator.clone())
        .unwrap_or_else(|| "dap".to_string());
    let estimator = parse_sim_estimator(&estimator_name)?;
    let policy_spec = args
        .policy
        .clone()
        .or(spec.policy.clone())
        .unwrap_or_else(|| "budget:20".to_string());
    let policy = parse_policy(&policy_spec)?;
    let n_iterations = args.iterations.or(spec.iterations).unwrap_or(10);
    let ensemble_size = args.ensemble.or(spec.ensemble_size).unwrap_or(10);
    let seed = args
        .seed
        .or(spec.seed)
        .context("a seed is required: pass --seed or set \"seed\" in the spec file")?;

    let corpus = generate_corpus(&corpus_params).map_err(|e| anyhow!(e))?;
    let sim_config = SimulationConfig {
        detector: detector.clone(),
        estimator,
        policy,
        n_iterations,
        ensemble_size,
        map_config: resolve_map(config)?,
    };
    let log = simulate(&corpus, &sim_config, seed).map_err(|e| anyhow!(e))?;

    let header = Header::new("al-simulate")
        .config("estimator", estimator.name())
        .config("policy", &policy_spec)
        .config("iterations", n_iterations)
        .config("ensemble_size", ensemble_size)
        .config("n_pool", corpus_params.n_pool)
        .config("n_test", corpus_params.n_test)
        .config("corpus_seed", corpus_params.seed)
        .config("detector_seed", detector.seed)
        .config("q_min", detector.q_min)
        .config("q_max", detector.q_max)
        .config("kappa", detector.kappa)
        .seed(seed);
    let rows: Vec<Vec<String>> = log
        .records
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                estimator.name().to_string(),
                policy_spec.clone(),
                r.n_selected.to_string(),
                r.cumulative_images.to_string(),
                fmt_f64(r.test_pixel_iou),
                fmt_f64(r.test_map),
            ]
        })
        .collect();
    write_file(
        &args.out,
        &render_csv(
            &header,
            &[
                "iteration",
                "estimator",
                "policy",
                "n_selected",
                "cumulative_images",
                "test_iou",
                "test_map",
            ],
            &rows,
        ),
    )?;
    let last = log.records.last().expect("baseline record always present");
    println!(
        "simulated {} iterations ({}, {}): {} labels, final test mAP {:.4} -> {}",
        log.records.len() - 1,
        estimator.name(),
        policy_spec,
        last.cumulative_images,
        last.test_map,
        args.out.display()
    );
    Ok(())
}
