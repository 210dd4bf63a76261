//! `score`: per-image pixel IoU and mAP of extracted predictions against
//! the manifest's ground truth.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use detconf_core::metrics::dataset_scores;

use crate::header::Header;
use crate::manifest::load_manifest;
use crate::settings::{resolve_map, ConfigFile};
use crate::tables::{fmt_f64, render_csv, write_file};

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory with the `extract` output (`<image_id>.json`).
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Output CSV (`image_id,pixel_iou,map`).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &ScoreArgs, config: &ConfigFile, jobs: usize) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    super::require_ground_truth(&manifest)?;
    let map_cfg = resolve_map(config)?;

    let pairs = super::map_entries(&manifest.entries, jobs, |entry| {
        let pred = super::load_prediction(&args.pred_dir, entry)?;
        let gt = super::load_ground_truth(&manifest, entry)?;
        Ok((pred, gt))
    })?;
    let (preds, gts): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let scores = dataset_scores(&preds, &gts, &map_cfg)?;

    let header = Header::new("score")
        .config(
            "iou_thresholds",
            map_cfg
                .iou_thresholds
                .iter()
                .map(|t| fmt_f64(*t))
                .collect::<Vec<_>>()
                .join(";"),
        )
        .note(format!(
            "mean_pixel_iou: {}",
            fmt_f64(scores.mean_pixel_iou)
        ))
        .note(format!("mean_map: {}", fmt_f64(scores.mean_map)));
    let rows: Vec<Vec<String>> = scores
        .images
        .iter()
        .map(|s| vec![s.image_id.clone(), fmt_f64(s.pixel_iou), fmt_f64(s.map)])
        .collect();
    write_file(
        &args.out,
        &render_csv(&header, &["image_id", "pixel_iou", "map"], &rows),
    )?;
    println!(
        "scored {} images: mean pixel IoU {:.4}, mean mAP {:.4} -> {}",
        scores.images.len(),
        scores.mean_pixel_iou,
        scores.mean_map,
        args.out.display()
    );
    Ok(())
}
