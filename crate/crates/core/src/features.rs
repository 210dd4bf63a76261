//! Object descriptive statistics and their histogram feature vector.
//!
//! Eight statistics describe the sizes, shapes and positions of the
//! detected objects in one image. Six are per object, two are per unordered
//! pair of objects:
//!
//! | # | statistic |
//! |---|-----------|
//! | 0 | bbox height / image height |
//! | 1 | bbox width / image width |
//! | 2 | bbox height / bbox width |
//! | 3 | polygon (shoelace) area / image area |
//! | 4 | polygon area / bbox area |
//! | 5 | bbox area / image area |
//! | 6 | abs centroid Δy / image height, per bbox pair |
//! | 7 | abs centroid Δx / image width, per bbox pair |
//!
//! Each statistic's values are binned into a B-bin histogram over a
//! configured range; the eight histograms concatenate into an `8×B` vector
//! that feeds the mAP regressor. Histograms are frequency-normalized by
//! default so images with one page and images with fifty lines live on the
//! same scale; raw-count mode is kept for ablation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::postprocess::Prediction;
use crate::rng::fnv1a;

/// Number of object statistics.
pub const FEATURE_COUNT: usize = 8;

/// Histogram layout: bin count, per-statistic value ranges and whether the
/// per-feature histograms are normalized to frequencies.
///
/// Models persist this configuration (see the forest module) so training
/// and inference always bin identically.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub bins: usize,
    /// `[lo, hi)` per statistic; out-of-range values clip into the first or
    /// last bin.
    pub ranges: [(f64, f64); FEATURE_COUNT],
    pub normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let mut ranges = [(0.0, 1.0); FEATURE_COUNT];
        // Aspect ratio is unbounded; [0, 5) covers page (~1.4) and line
        // (<1) regimes, taller objects clip into the last bin.
        ranges[2] = (0.0, 5.0);
        Self {
            bins: 10,
            ranges,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureConfigError {
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("range for statistic {index} is empty: [{lo}, {hi})")]
    EmptyRange { index: usize, lo: f64, hi: f64 },
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureConfigError> {
        if self.bins == 0 {
            return Err(FeatureConfigError::NoBins);
        }
        for (index, &(lo, hi)) in self.ranges.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(FeatureConfigError::EmptyRange { index, lo, hi });
            }
        }
        Ok(())
    }

    /// Length of the concatenated vector.
    pub fn vector_len(&self) -> usize {
        FEATURE_COUNT * self.bins
    }

    /// Stable digest of the binning configuration, stored in trained models
    /// and output headers to catch train/predict mismatches.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(9 + FEATURE_COUNT * 16);
        bytes.extend_from_slice(&(self.bins as u64).to_le_bytes());
        bytes.push(u8::from(self.normalize));
        for &(lo, hi) in &self.ranges {
            bytes.extend_from_slice(&lo.to_le_bytes());
            bytes.extend_from_slice(&hi.to_le_bytes());
        }
        fnv1a(&bytes)
    }
}

/// Concatenated per-statistic histograms for one image, feature-major
/// (statistic 0's bins first).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub image_id: String,
    pub values: Vec<f64>,
}

/// The raw statistic values for one prediction: one list per statistic.
///
/// Lists 0–5 hold one entry per object; lists 6–7 one entry per unordered
/// object pair. An empty prediction yields eight empty lists, a single
/// object leaves the pair lists empty.
pub fn object_feature_values(pred: &Prediction) -> [Vec<f64>; FEATURE_COUNT] {
    let mut lists: [Vec<f64>; FEATURE_COUNT] = Default::default();
    let image_h = pred.height as f64;
    let image_w = pred.width as f64;
    let image_area = image_h * image_w;

    for obj in &pred.objects {
        let bbox_h = obj.bbox.height() as f64;
        let bbox_w = obj.bbox.width() as f64;
        let bbox_area = obj.bbox.area() as f64;
        let poly_area = obj.polygon.area();
        lists[0].push(bbox_h / image_h);
        lists[1].push(bbox_w / image_w);
        lists[2].push(bbox_h / bbox_w);
        lists[3].push(poly_area / image_area);
        lists[4].push(poly_area / bbox_area);
        lists[5].push(bbox_area / image_area);
    }
    for i in 0..pred.objects.len() {
        let ci = pred.objects[i].bbox.centroid();
        for j in i + 1..pred.objects.len() {
            let cj = pred.objects[j].bbox.centroid();
            lists[6].push(libm::fabs(ci.y - cj.y) / image_h);
            lists[7].push(libm::fabs(ci.x - cj.x) / image_w);
        }
    }
    lists
}

/// Bins each statistic's values and concatenates the histograms.
///
/// Bins are half-open (a value exactly on a boundary goes to the higher
/// bin) except the last, which is closed; out-of-range values clip into the
/// first or last bin. With `normalize`, each histogram sums to 1 unless it
/// has no observations, in which case it stays all-zero.
pub fn feature_histogram_vector(
    image_id: &str,
    lists: &[Vec<f64>; FEATURE_COUNT],
    cfg: &FeatureConfig,
) -> FeatureVector {
    debug_assert!(cfg.validate().is_ok());
    let bins = cfg.bins;
    let mut values = vec![0.0f64; FEATURE_COUNT * bins];
    for (f, list) in lists.iter().enumerate() {
        let (lo, hi) = cfg.ranges[f];
        let slot = &mut values[f * bins..(f + 1) * bins];
        for &v in list {
            let scaled = (v - lo) / (hi - lo) * bins as f64;
            let idx = (libm::floor(scaled) as i64).clamp(0, bins as i64 - 1) as usize;
            slot[idx] += 1.0;
        }
        if cfg.normalize && !list.is_empty() {
            let count = list.len() as f64;
            for bin in slot.iter_mut() {
                *bin /= count;
            }
        }
    }
    FeatureVector {
        image_id: String::from(image_id),
        values,
    }
}

/// Convenience composition of [`object_feature_values`] and
/// [`feature_histogram_vector`].
pub fn features_for_prediction(pred: &Prediction, cfg: &FeatureConfig) -> FeatureVector {
    feature_histogram_vector(&pred.image_id, &object_feature_values(pred), cfg)
}
