//! `features`: object-statistics histogram vectors for extracted
//! predictions.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use detconf_core::features::features_for_prediction;

use crate::header::Header;
use crate::manifest::load_manifest;
use crate::settings::{resolve_features, ConfigFile};
use crate::tables::{feature_config_comment, fmt_f64, render_csv, write_file};

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory with the `extract` output.
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Output CSV (`image_id,v_0,...,v_{8B-1}`).
    #[arg(long)]
    pub out: PathBuf,
    /// Histogram bins per statistic (default 10).
    #[arg(long)]
    pub bins: Option<usize>,
}

pub fn run(args: &FeaturesArgs, config: &ConfigFile, jobs: usize) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let cfg = resolve_features(config, args.bins)?;
    let vectors = super::map_entries(&manifest.entries, jobs, |entry| {
        let pred = super::load_prediction(&args.pred_dir, entry)?;
        Ok(features_for_prediction(&pred, &cfg))
    })?;

    let header = Header::new("features")
        .config("bins", cfg.bins)
        .config("normalize", cfg.normalize)
        .note(feature_config_comment(&cfg));
    let mut columns = vec!["image_id".to_string()];
    columns.extend((0..cfg.vector_len()).map(|i| format!("v_{i}")));
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = vectors
        .iter()
        .map(|v| {
            let mut row = Vec::with_capacity(v.values.len() + 1);
            row.push(v.image_id.clone());
            row.extend(v.values.iter().map(|x| fmt_f64(*x)));
            row
        })
        .collect();
    write_file(&args.out, &render_csv(&header, &column_refs, &rows))?;
    println!(
        "wrote {} feature vectors of length {} -> {}",
        rows.len(),
        cfg.vector_len(),
        args.out.display()
    );
    Ok(())
}
