//! Subcommand implementations.
//!
//! Each command resolves its settings (defaults < config file < flags),
//! loads inputs through the format modules, drives the core crate, and
//! writes outputs with provenance headers. Image-level work can run on a
//! `--jobs` thread pool; output order always follows the manifest, so the
//! results are identical at any parallelism.

pub mod al;
pub mod confidence;
pub mod extract;
pub mod features_cmd;
pub mod reject;
pub mod rfr;
pub mod score;
pub mod synth;

use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use detconf_core::metrics::GroundTruth;
use detconf_core::postprocess::Prediction;

use crate::manifest::{Manifest, ManifestEntry};
use crate::polygons;

/// Applies `f` to every manifest entry, optionally in parallel, preserving
/// manifest order. The first error in manifest order wins, so error
/// reporting does not depend on scheduling either.
pub(crate) fn map_entries<T, F>(entries: &[ManifestEntry], jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&ManifestEntry) -> Result<T> + Sync,
{
    if jobs <= 1 {
        return entries.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("cannot build worker pool")?;
    let results: Vec<Result<T>> = pool.install(|| entries.par_iter().map(&f).collect());
    results.into_iter().collect()
}

/// Loads the prediction JSON written by `extract` for one manifest entry.
pub(crate) fn load_prediction(pred_dir: &Path, entry: &ManifestEntry) -> Result<Prediction> {
    let path = pred_dir.join(format!("{}.json", entry.image_id));
    let doc = polygons::load_polygon_doc(&path)?;
    let pred = polygons::doc_to_prediction(&path, &doc)?;
    if pred.image_id != entry.image_id {
        bail!(
            "{}: prediction is for image {:?}, expected {:?}",
            path.display(),
            pred.image_id,
            entry.image_id
        );
    }
    if (pred.height, pred.width) != (entry.height, entry.width) {
        bail!(
            "{}: prediction dimensions {}x{} disagree with manifest {}x{}",
            path.display(),
            pred.height,
            pred.width,
            entry.height,
            entry.width
        );
    }
    Ok(pred)
}

/// Loads the ground truth referenced by a manifest entry.
pub(crate) fn load_ground_truth(manifest: &Manifest, entry: &ManifestEntry) -> Result<GroundTruth> {
    let rel = entry.ground_truth.as_ref().with_context(|| {
        format!(
            "entry {:?} has no ground_truth, required by this command",
            entry.image_id
        )
    })?;
    let path = manifest.resolve(rel);
    let doc = polygons::load_polygon_doc(&path)?;
    let gt = polygons::doc_to_ground_truth(&path, &doc)?;
    if (gt.height, gt.width) != (entry.height, entry.width) {
        bail!(
            "{}: ground-truth dimensions {}x{} disagree with manifest {}x{}",
            path.display(),
            gt.height,
            gt.width,
            entry.height,
            entry.width
        );
    }
    Ok(gt)
}

/// Fails fast listing every entry that is missing a ground-truth file.
pub(crate) fn require_ground_truth(manifest: &Manifest) -> Result<()> {
    let missing: Vec<&str> = manifest
        .entries
        .iter()
        .filter(|e| e.ground_truth.is_none())
        .map(|e| e.image_id.as_str())
        .collect();
    if !missing.is_empty() {
        bail!(
            "manifest entries without ground_truth (required by this command): {}",
            missing.join(", ")
        );
    }
    Ok(())
}
