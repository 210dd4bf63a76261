//! `confidence`: per-image confidence scores straight from the manifest's
//! probability maps.
//!
//! `pce` and `map-rfr` read each entry's first map; `dap` and `dov` read
//! all of them as a dropout ensemble (entries must list at least two).

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;

use detconf_core::estimators::{dap, dov, pce, ConfidenceScore, DropoutEnsemble, EstimatorKind};
use detconf_core::features::features_for_prediction;
use detconf_core::forest::{predict, ForestModel};
use detconf_core::postprocess::extract_objects;

use crate::header::Header;
use crate::manifest::load_manifest;
use crate::model_file::load_model;
use crate::pmap::read_probability_map;
use crate::settings::{resolve_map, resolve_postprocess, ConfigFile};
use crate::tables::{fmt_f64, parse_estimator, render_csv, write_file};

#[derive(Debug, Args)]
pub struct ConfidenceArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// One of pce, dap, dov, map-rfr.
    #[arg(long)]
    pub estimator: String,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Trained model file (required for map-rfr).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub connectivity: Option<u8>,
    #[arg(long)]
    pub min_area: Option<u64>,
}

pub fn run(args: &ConfidenceArgs, config: &ConfigFile, jobs: usize) -> Result<()> {
    let estimator = parse_estimator(&args.estimator).ok_or_else(|| {
        anyhow!(
            "unknown estimator {:?} (use pce|dap|dov|map-rfr)",
            args.estimator
        )
    })?;
    let manifest = load_manifest(&args.manifest)?;
    let pp_cfg = resolve_postprocess(config, args.threshold, args.connectivity, args.min_area)?;
    let map_cfg = resolve_map(config)?;

    let model: Option<ForestModel> = if estimator == EstimatorKind::MapRfr {
        let path = args
            .model
            .as_ref()
            .context("--model is required for the map-rfr estimator")?;
        let model = load_model(path)?;
        if model.feature_config.is_none() {
            bail!(
                "{}: model carries no feature configuration; retrain it from a feature CSV",
                path.display()
            );
        }
        Some(model)
    } else {
        None
    };

    if matches!(estimator, EstimatorKind::Dap | EstimatorKind::Dov) {
        let short: Vec<&str> = manifest
            .entries
            .iter()
            .filter(|e| e.prob_maps.len() < 2)
            .map(|e| e.image_id.as_str())
            .collect();
        if !short.is_empty() {
            bail!(
                "dropout estimators need at least 2 probability maps per entry; offending entries: {}",
                short.join(", ")
            );
        }
    }

    let scored = super::map_entries(&manifest.entries, jobs, |entry| {
        let load = |rel: &str| -> Result<_> {
            let path = manifest.resolve(rel);
            let map = read_probability_map(&path)?;
            if (map.height(), map.width()) != (entry.height, entry.width) {
                bail!(
                    "{}: map dimensions {}x{} disagree with manifest {}x{}",
                    path.display(),
                    map.height(),
                    map.width(),
                    entry.height,
                    entry.width
                );
            }
            Ok(extract_objects(&entry.image_id, &map, &pp_cfg))
        };
        let score: ConfidenceScore;
        let n_objects: usize;
        match estimator {
            EstimatorKind::Pce => {
                let pred = load(&entry.prob_maps[0])?;
                n_objects = pred.objects.len();
                score = pce(&pred);
            }
            EstimatorKind::MapRfr => {
                let pred = load(&entry.prob_maps[0])?;
                n_objects = pred.objects.len();
                let model = model.as_ref().expect("loaded above");
                let feature_cfg = model.feature_config.as_ref().expect("checked above");
                let vector = features_for_prediction(&pred, feature_cfg);
                let value = predict(model, &vector.values).map_err(|e| anyhow!(e))?;
                score = ConfidenceScore::new(entry.image_id.clone(), EstimatorKind::MapRfr, value);
            }
            EstimatorKind::Dap | EstimatorKind::Dov => {
                let members = entry
                    .prob_maps
                    .iter()
                    .map(|rel| load(rel))
                    .collect::<Result<Vec<_>>>()?;
                n_objects = members[0].objects.len();
                let ensemble = DropoutEnsemble::new(members).map_err(|e| anyhow!(e))?;
                score = if estimator == EstimatorKind::Dap {
                    dap(&ensemble, &map_cfg).map_err(|e| anyhow!(e))?
                } else {
                    dov(&ensemble).map_err(|e| anyhow!(e))?
                };
            }
        }
        Ok((score, n_objects))
    })?;

    let mut header = Header::new("confidence")
        .config("estimator", estimator.name())
        .config("binarize_threshold", pp_cfg.binarize_threshold)
        .config("min_area_px", pp_cfg.min_area_px);
    if estimator == EstimatorKind::Dap {
        header = header.config(
            "iou_thresholds",
            map_cfg
                .iou_thresholds
                .iter()
                .map(|t| fmt_f64(*t))
                .collect::<Vec<_>>()
                .join(";"),
        );
    }
    if let Some(model) = &model {
        header = header.config(
            "model_fingerprint",
            format!("{:016x}", model.fingerprint().expect("checked above")),
        );
    }
    let rows: Vec<Vec<String>> = scored
        .iter()
        .map(|(s, n)| {
            vec![
                s.image_id.clone(),
                s.estimator.name().to_string(),
                fmt_f64(s.value),
                s.higher_is_confident.to_string(),
                n.to_string(),
            ]
        })
        .collect();
    write_file(
        &args.out,
        &render_csv(
            &header,
            &[
                "image_id",
                "estimator",
                "value",
                "higher_is_confident",
                "n_objects",
            ],
            &rows,
        ),
    )?;
    println!(
        "computed {} {} scores -> {}",
        rows.len(),
        estimator.name(),
        args.out.display()
    );
    Ok(())
}
