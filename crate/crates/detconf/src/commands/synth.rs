//! `synth`: writes a self-contained synthetic corpus to disk — ground
//! truth, severity-corrupted probability maps (optionally N-member
//! ensembles) and the manifest tying them together.

use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::Args;
use rand::Rng;

use detconf_core::active_learning::{
    generate_corpus, synthesize_ensemble_maps, synthesize_probability_map, CorpusParams,
    ErrorMixture,
};
use detconf_core::rng::{fnv1a, stream};

use crate::header::Header;
use crate::manifest::{save_manifest, ManifestEntry, ManifestFile};
use crate::pmap::write_pmap;
use crate::polygons::save_ground_truth;
use crate::tables::{fmt_f64, render_csv, write_file};

/// Stream tag for per-image severity draws (outside the core tag range).
const SEVERITY_TAG: u64 = 0x20;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (gt/, maps/, manifest.json, severities.csv).
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Master seed for layouts, severities and corruption.
    #[arg(long)]
    pub seed: u64,
    /// Number of images.
    #[arg(long, default_value_t = 24)]
    pub images: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 1)]
    pub min_objects: usize,
    #[arg(long, default_value_t = 3)]
    pub max_objects: usize,
    /// Severity range the per-image severities are drawn from.
    #[arg(long, default_value_t = 0.0)]
    pub severity_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub severity_max: f64,
    /// Probability maps per image (>1 writes a dropout ensemble).
    #[arg(long, default_value_t = 1)]
    pub ensemble: usize,
    /// Member-severity spread for ensembles.
    #[arg(long, default_value_t = 1.0)]
    pub dropout_noise: f64,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    if args.images == 0 {
        anyhow::bail!("--images must be at least 1");
    }
    if args.ensemble == 0 {
        anyhow::bail!("--ensemble must be at least 1");
    }
    if !(0.0..=1.0).contains(&args.severity_min)
        || !(args.severity_min..=1.0).contains(&args.severity_max)
    {
        anyhow::bail!("severity range needs 0 <= min <= max <= 1");
    }
    let params = CorpusParams {
        n_pool: args.images,
        n_test: 0,
        height: args.height,
        width: args.width,
        min_objects: args.min_objects,
        max_objects: args.max_objects,
        seed: args.seed,
    };
    let corpus = generate_corpus(&params).map_err(|e| anyhow!(e))?;
    let mixture = ErrorMixture::default();

    let gt_dir = args.out_dir.join("gt");
    let maps_dir = args.out_dir.join("maps");
    std::fs::create_dir_all(&gt_dir)
        .and_then(|_| std::fs::create_dir_all(&maps_dir))
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;

    let mut entries = Vec::with_capacity(corpus.pool.len());
    let mut severity_rows = Vec::with_capacity(corpus.pool.len());
    for gt in &corpus.pool {
        let mut rng = stream(args.seed, &[SEVERITY_TAG, fnv1a(gt.image_id.as_bytes())]);
        let severity =
            args.severity_min + (args.severity_max - args.severity_min) * rng.random::<f64>();

        save_ground_truth(&gt_dir.join(format!("{}.json", gt.image_id)), gt)?;

        let mut map_paths = Vec::with_capacity(args.ensemble);
        if args.ensemble == 1 {
            let map = synthesize_probability_map(gt, severity, &mixture, args.seed);
            let rel = format!("maps/{}.pmap", gt.image_id);
            write_pmap(&args.out_dir.join(&rel), &map)?;
            map_paths.push(rel);
        } else {
            let maps = synthesize_ensemble_maps(
                gt,
                severity,
                &mixture,
                args.dropout_noise,
                args.ensemble,
                args.seed,
            );
            for (m, map) in maps.iter().enumerate() {
                let rel = format!("maps/{}.m{m}.pmap", gt.image_id);
                write_pmap(&args.out_dir.join(&rel), map)?;
                map_paths.push(rel);
            }
        }
        entries.push(ManifestEntry {
            image_id: gt.image_id.clone(),
            height: gt.height,
            width: gt.width,
            prob_maps: map_paths,
            ground_truth: Some(format!("gt/{}.json", gt.image_id)),
        });
        severity_rows.push(vec![gt.image_id.clone(), fmt_f64(severity)]);
    }

    save_manifest(
        &args.out_dir.join("manifest.json"),
        &ManifestFile { entries },
    )?;
    let header = Header::new("synth")
        .config("images", args.images)
        .config("height", args.height)
        .config("width", args.width)
        .config("min_objects", args.min_objects)
        .config("max_objects", args.max_objects)
        .config("severity_min", args.severity_min)
        .config("severity_max", args.severity_max)
        .config("ensemble", args.ensemble)
        .config("dropout_noise", args.dropout_noise)
        .seed(args.seed);
    write_file(
        &args.out_dir.join("severities.csv"),
        &render_csv(&header, &["image_id", "severity"], &severity_rows),
    )?;
    println!(
        "wrote {} synthetic images ({} map(s) each) into {}",
        args.images,
        args.ensemble,
        args.out_dir.display()
    );
    Ok(())
}
