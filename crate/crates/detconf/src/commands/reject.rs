//! `reject-curve`: curve, bootstrap band and random-baseline CSVs from
//! confidence scores plus per-image metrics.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use detconf_core::evaluation::{
    bootstrap_band, default_threshold_grid, random_baseline, reject_curve, CurveBand, MetricKind,
};

use crate::header::Header;
use crate::settings::parse_grid;
use crate::tables::{fmt_f64, read_confidence_csv, read_image_scores_csv, render_csv, write_file};

#[derive(Debug, Args)]
pub struct RejectCurveArgs {
    /// Confidence CSV from the `confidence` command.
    #[arg(long)]
    pub scores: PathBuf,
    /// Per-image metric CSV from the `score` command.
    #[arg(long)]
    pub image_scores: PathBuf,
    /// Curve output CSV.
    #[arg(long)]
    pub out_curve: PathBuf,
    /// Bootstrap band output CSV.
    #[arg(long)]
    pub out_band: Option<PathBuf>,
    /// Random-baseline band output CSV.
    #[arg(long)]
    pub out_random: Option<PathBuf>,
    /// Threshold sweep `start:end:step`; defaults to the estimator's
    /// conventional grid (0:1:0.05, or 10:0:-1 for dov).
    #[arg(long)]
    pub grid: Option<String>,
    /// Which per-image metric the curve tracks: map or iou.
    #[arg(long, default_value = "map")]
    pub metric: String,
    /// Resamples for the band and orderings for the baseline.
    #[arg(long, default_value_t = 100)]
    pub bootstrap: usize,
    /// Required when a band or baseline output is requested.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn band_rows(band: &CurveBand) -> Vec<Vec<String>> {
    (0..band.grid.len())
        .map(|g| {
            vec![
                fmt_f64(band.grid[g]),
                fmt_f64(band.p10[g]),
                fmt_f64(band.median[g]),
                fmt_f64(band.p90[g]),
            ]
        })
        .collect()
}

pub fn run(args: &RejectCurveArgs) -> Result<()> {
    let scores = read_confidence_csv(&args.scores)?;
    let image_scores = read_image_scores_csv(&args.image_scores)?;
    let metric = match args.metric.as_str() {
        "map" => MetricKind::Map,
        "iou" => MetricKind::PixelIou,
        other => anyhow::bail!("unknown metric {other:?} (use map or iou)"),
    };
    let estimator = scores[0].estimator;
    let grid = match &args.grid {
        Some(spec) => parse_grid(spec)?,
        None => default_threshold_grid(estimator),
    };
    let grid_label = args
        .grid
        .clone()
        .unwrap_or_else(|| format!("default:{}", estimator.name()));

    let curve = reject_curve(&scores, &image_scores, &grid, metric)?;
    let header = Header::new("reject-curve")
        .config("estimator", estimator.name())
        .config("metric", metric.name())
        .config("grid", &grid_label);
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| {
            vec![
                fmt_f64(p.threshold),
                fmt_f64(p.rejection_rate),
                fmt_f64(p.metric),
                p.n_remaining.to_string(),
            ]
        })
        .collect();
    write_file(
        &args.out_curve,
        &render_csv(
            &header,
            &["threshold", "rejection_rate", "metric", "n_remaining"],
            &rows,
        ),
    )?;
    println!(
        "reject curve with {} points -> {}",
        curve.points.len(),
        args.out_curve.display()
    );

    let band_columns = ["rejection_rate", "p10", "median", "p90"];
    if let Some(out_band) = &args.out_band {
        let seed = args.seed.context("--seed is required for --out-band")?;
        let band = bootstrap_band(&scores, &image_scores, &grid, metric, args.bootstrap, seed)?;
        let header = Header::new("reject-curve/band")
            .config("estimator", estimator.name())
            .config("metric", metric.name())
            .config("grid", &grid_label)
            .config("resamples", args.bootstrap)
            .config("rejection_grid", "0:1:0.01")
            .seed(seed);
        write_file(
            out_band,
            &render_csv(&header, &band_columns, &band_rows(&band)),
        )?;
        println!(
            "bootstrap band over {} resamples -> {}",
            args.bootstrap,
            out_band.display()
        );
    }
    if let Some(out_random) = &args.out_random {
        let seed = args.seed.context("--seed is required for --out-random")?;
        let band = random_baseline(&image_scores, metric, args.bootstrap, seed)?;
        let header = Header::new("reject-curve/random")
            .config("metric", metric.name())
            .config("orderings", args.bootstrap)
            .config("rejection_grid", "0:1:0.01")
            .seed(seed);
        write_file(
            out_random,
            &render_csv(&header, &band_columns, &band_rows(&band)),
        )?;
        println!(
            "random baseline over {} orderings -> {}",
            args.bootstrap,
            out_random.display()
        );
    }
    Ok(())
}
