//! `extract`: probability maps → prediction JSON files.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use detconf_core::postprocess::{extract_objects, Connectivity};

use crate::manifest::load_manifest;
use crate::pmap::read_probability_map;
use crate::polygons::save_prediction;
use crate::settings::{resolve_postprocess, ConfigFile};

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory receiving one `<image_id>.json` prediction per entry.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Binarization threshold (default 0.5).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Pixel connectivity, 4 or 8 (default 8).
    #[arg(long)]
    pub connectivity: Option<u8>,
    /// Minimum object area in pixels; smaller components are removed
    /// (default 50).
    #[arg(long)]
    pub min_area: Option<u64>,
}

pub fn run(args: &ExtractArgs, config: &ConfigFile, jobs: usize) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let cfg = resolve_postprocess(config, args.threshold, args.connectivity, args.min_area)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;

    let predictions = super::map_entries(&manifest.entries, jobs, |entry| {
        let path = manifest.resolve(&entry.prob_maps[0]);
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
        Ok(extract_objects(&entry.image_id, &map, &cfg))
    })?;

    for pred in &predictions {
        let path = args.out_dir.join(format!("{}.json", pred.image_id));
        save_prediction(&path, pred)?;
    }
    let objects: usize = predictions.iter().map(|p| p.objects.len()).sum();
    println!(
        "extracted {} objects from {} images into {} (threshold {}, connectivity {}, min area {})",
        objects,
        predictions.len(),
        args.out_dir.display(),
        cfg.binarize_threshold,
        match cfg.connectivity {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        },
        cfg.min_area_px,
    );
    Ok(())
}
