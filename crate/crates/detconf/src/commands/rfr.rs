//! `train-rfr` / `eval-rfr`: fit the mAP regressor on feature vectors and
//! measure its mean squared error.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;

use detconf_core::forest::{fit, mse, RegressionDataset};

use crate::header::Header;
use crate::model_file::{load_model, save_model};
use crate::settings::{resolve_forest, ConfigFile, ForestFlags};
use crate::tables::{read_features_csv, read_targets_csv};

#[derive(Debug, Args)]
pub struct TrainRfrArgs {
    /// Feature CSV from the `features` command.
    #[arg(long)]
    pub features: PathBuf,
    /// Targets CSV: any table with `image_id` and `map` columns (the
    /// `score` output works directly).
    #[arg(long)]
    pub targets: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for bootstrap resampling and feature subsampling.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<u32>,
    #[arg(long)]
    pub min_samples_split: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub features_per_split: Option<usize>,
    /// Train every tree on the full dataset instead of bootstrap resamples.
    #[arg(long)]
    pub no_bootstrap: bool,
}

/// Joins feature vectors with targets by image id, failing with the full
/// list of unmatched ids on either side.
fn build_dataset(
    vectors: &[detconf_core::features::FeatureVector],
    targets: &[(String, f64)],
) -> Result<RegressionDataset> {
    let target_by_id: BTreeMap<&str, f64> = targets
        .iter()
        .map(|(id, map)| (id.as_str(), *map))
        .collect();
    if target_by_id.len() != targets.len() {
        bail!("targets file contains duplicate image ids");
    }
    let vector_ids: std::collections::BTreeSet<&str> =
        vectors.iter().map(|v| v.image_id.as_str()).collect();
    let missing_targets: Vec<&str> = vectors
        .iter()
        .map(|v| v.image_id.as_str())
        .filter(|id| !target_by_id.contains_key(id))
        .collect();
    let missing_vectors: Vec<&str> = targets
        .iter()
        .map(|(id, _)| id.as_str())
        .filter(|id| !vector_ids.contains(id))
        .collect();
    if !missing_targets.is_empty() || !missing_vectors.is_empty() {
        bail!(
            "feature/target ids do not align; without targets: [{}], without features: [{}]",
            missing_targets.join(", "),
            missing_vectors.join(", ")
        );
    }
    let mut dataset = RegressionDataset::new();
    for v in vectors {
        dataset
            .push(
                v.image_id.clone(),
                v.values.clone(),
                target_by_id[v.image_id.as_str()],
            )
            .map_err(|e| anyhow!(e))?;
    }
    Ok(dataset)
}

pub fn run_train(args: &TrainRfrArgs, config: &ConfigFile) -> Result<()> {
    let (feature_cfg, vectors) = read_features_csv(&args.features)?;
    let targets = read_targets_csv(&args.targets)?;
    let dataset = build_dataset(&vectors, &targets)?;
    let flags = ForestFlags {
        trees: args.trees,
        max_depth: args.max_depth,
        min_samples_split: args.min_samples_split,
        min_samples_leaf: args.min_samples_leaf,
        features_per_split: args.features_per_split,
        no_bootstrap: args.no_bootstrap,
    };
    let params = resolve_forest(config, &flags, args.seed)?;
    let mut model = fit(&dataset, &params).map_err(|e| anyhow!(e))?;
    model.feature_config = Some(feature_cfg);
    save_model(&args.out, &model)?;
    let train_mse = mse(&model, &dataset).map_err(|e| anyhow!(e))?;
    println!(
        "trained {} trees on {} rows (train MSE {:.6}) -> {}",
        params.n_trees,
        dataset.len(),
        train_mse,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalRfrArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub targets: PathBuf,
    /// MSE report (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_eval(args: &EvalRfrArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let (feature_cfg, vectors) = read_features_csv(&args.features)?;
    if let Some(fp) = model.fingerprint() {
        if fp != feature_cfg.fingerprint() {
            bail!(
                "{}: feature configuration mismatch: model fingerprint {:016x}, feature file {:016x}",
                args.features.display(),
                fp,
                feature_cfg.fingerprint()
            );
        }
    }
    let targets = read_targets_csv(&args.targets)?;
    let dataset = build_dataset(&vectors, &targets)?;
    let value = mse(&model, &dataset).map_err(|e| anyhow!(e))?;

    let header = Header::new("eval-rfr")
        .config("n_trees", model.params.n_trees)
        .config("model_seed", model.params.seed);
    let report = serde_json::json!({
        "header": header.render(),
        "mse": value,
        "n_images": dataset.len(),
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serialization");
    text.push('\n');
    std::fs::write(&args.out, text)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    println!(
        "MSE {:.6} over {} images -> {}",
        value,
        dataset.len(),
        args.out.display()
    );
    Ok(())
}
