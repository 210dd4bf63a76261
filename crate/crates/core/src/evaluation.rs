//! Reject curves: how the retained set's quality evolves as the least
//! confident images are removed.
//!
//! A curve point fixes a confidence threshold, drops every image whose
//! score falls on the unconfident side of it (strictly below for
//! higher-is-confident estimators, strictly above for variance-style ones)
//! and reports the mean metric of what remains. Curves stop short of 100%
//! rejection: a threshold that empties the set produces no point.
//!
//! Uncertainty is summarized by percentile bands (10th/median/90th) over
//! bootstrap resamples of the image set, and compared against a baseline of
//! uniformly random rejection orders. Curves with different attainable
//! rejection rates are aligned by step interpolation onto a common
//! rejection grid (0 to 1, step 0.01).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::estimators::{ConfidenceScore, EstimatorKind};
use crate::metrics::ImageScore;
use crate::rng::{stream, tags};

/// Which per-image metric the curve tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Map,
    PixelIou,
}

impl MetricKind {
    fn of(self, score: &ImageScore) -> f64 {
        match self {
            MetricKind::Map => score.map,
            MetricKind::PixelIou => score.pixel_iou,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Map => "map",
            MetricKind::PixelIou => "iou",
        }
    }
}

/// One threshold of a reject curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub rejection_rate: f64,
    pub metric: f64,
    pub n_remaining: usize,
}

/// A reject curve for one estimator, points in threshold-sweep order.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectCurve {
    pub estimator: EstimatorKind,
    pub metric: MetricKind,
    pub points: Vec<CurvePoint>,
}

/// Pointwise percentiles of many curves on a common rejection grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveBand {
    pub grid: Vec<f64>,
    pub p10: Vec<f64>,
    pub median: Vec<f64>,
    pub p90: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluationError {
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("no images to evaluate")]
    EmptyInput,
    #[error("confidence scores mix estimators: {0:?} and {1:?}")]
    MixedEstimators(EstimatorKind, EstimatorKind),
    #[error("duplicate image id {0:?}")]
    DuplicateId(String),
    #[error("image ids do not align; scores without metrics: {missing_metrics:?}, metrics without scores: {missing_scores:?}")]
    IdMismatch {
        missing_metrics: Vec<String>,
        missing_scores: Vec<String>,
    },
    #[error("resample count must be at least 1")]
    NoResamples,
}

/// The conventional threshold sweep per estimator: 0 to 1 in steps of 0.05
/// for the bounded scores, 10 down to 0 in steps of −1 for the unbounded
/// object variance.
pub fn default_threshold_grid(kind: EstimatorKind) -> Vec<f64> {
    match kind {
        EstimatorKind::Dov => (0..=10).map(|k| (10 - k) as f64).collect(),
        _ => (0..=20).map(|k| k as f64 / 20.0).collect(),
    }
}

/// The common rejection grid curves are aligned on: 0 to 1, step 0.01.
pub fn rejection_grid() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

/// Confidence values and metric values aligned 1:1, in score order.
struct Aligned {
    values: Vec<f64>,
    metrics: Vec<f64>,
    estimator: EstimatorKind,
    higher_is_confident: bool,
}

fn align(
    scores: &[ConfidenceScore],
    image_scores: &[ImageScore],
    metric: MetricKind,
) -> Result<Aligned, EvaluationError> {
    if scores.is_empty() {
        return Err(EvaluationError::EmptyInput);
    }
    let estimator = scores[0].estimator;
    for s in scores {
        if s.estimator != estimator {
            return Err(EvaluationError::MixedEstimators(estimator, s.estimator));
        }
    }
    let mut metric_by_id = BTreeMap::new();
    for s in image_scores {
        if metric_by_id
            .insert(s.image_id.as_str(), metric.of(s))
            .is_some()
        {
            return Err(EvaluationError::DuplicateId(s.image_id.clone()));
        }
    }
    let mut score_ids = BTreeSet::new();
    for s in scores {
        if !score_ids.insert(s.image_id.as_str()) {
            return Err(EvaluationError::DuplicateId(s.image_id.clone()));
        }
    }
    let missing_metrics: Vec<String> = scores
        .iter()
        .filter(|s| !metric_by_id.contains_key(s.image_id.as_str()))
        .map(|s| s.image_id.clone())
        .collect();
    let missing_scores: Vec<String> = image_scores
        .iter()
        .filter(|s| !score_ids.contains(s.image_id.as_str()))
        .map(|s| s.image_id.clone())
        .collect();
    if !missing_metrics.is_empty() || !missing_scores.is_empty() {
        return Err(EvaluationError::IdMismatch {
            missing_metrics,
            missing_scores,
        });
    }
    Ok(Aligned {
        values: scores.iter().map(|s| s.value).collect(),
        metrics: scores
            .iter()
            .map(|s| metric_by_id[s.image_id.as_str()])
            .collect(),
        estimator,
        higher_is_confident: estimator.higher_is_confident(),
    })
}

/// Core sweep shared by the public entry points; operates on parallel
/// value/metric arrays (resamples may repeat images).
fn curve_points(
    values: &[f64],
    metrics: &[f64],
    higher_is_confident: bool,
    grid: &[f64],
) -> Vec<CurvePoint> {
    let n = values.len();
    let mut points = Vec::with_capacity(grid.len());
    for &threshold in grid {
        let mut sum = 0.0;
        let mut kept = 0usize;
        for (&v, &m) in values.iter().zip(metrics) {
            let rejected = if higher_is_confident {
                v < threshold
            } else {
                v > threshold
            };
            if !rejected {
                sum += m;
                kept += 1;
            }
        }
        if kept == 0 {
            continue;
        }
        points.push(CurvePoint {
            threshold,
            rejection_rate: (n - kept) as f64 / n as f64,
            metric: sum / kept as f64,
            n_remaining: kept,
        });
    }
    points
}

/// Builds the reject curve for one estimator's scores over `grid`.
pub fn reject_curve(
    scores: &[ConfidenceScore],
    image_scores: &[ImageScore],
    grid: &[f64],
    metric: MetricKind,
) -> Result<RejectCurve, EvaluationError> {
    if grid.is_empty() {
        return Err(EvaluationError::EmptyGrid);
    }
    let aligned = align(scores, image_scores, metric)?;
    Ok(RejectCurve {
        estimator: aligned.estimator,
        metric,
        points: curve_points(
            &aligned.values,
            &aligned.metrics,
            aligned.higher_is_confident,
            grid,
        ),
    })
}

/// Step interpolation onto a rejection grid: the value at `g` is the metric
/// of the last point with rate `<= g`, extended with the first/last point
/// beyond the attainable range.
fn step_on_grid(points: &[(f64, f64)], grid: &[f64]) -> Vec<f64> {
    debug_assert!(!points.is_empty());
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    grid.iter()
        .map(|&g| {
            let mut value = sorted[0].1;
            for &(rate, metric) in &sorted {
                if rate <= g {
                    value = metric;
                } else {
                    break;
                }
            }
            value
        })
        .collect()
}

/// Nearest-rank percentile: the `ceil(q/100 * n)`-th smallest value. Exact
/// order statistics, no interpolation.
fn percentile(sorted: &[f64], q: usize) -> f64 {
    let n = sorted.len();
    let k = (q * n).div_ceil(100).max(1);
    sorted[k - 1]
}

fn band_from_rows(rows: Vec<Vec<f64>>, grid: Vec<f64>) -> CurveBand {
    let mut p10 = Vec::with_capacity(grid.len());
    let mut median = Vec::with_capacity(grid.len());
    let mut p90 = Vec::with_capacity(grid.len());
    let mut column = Vec::with_capacity(rows.len());
    for g in 0..grid.len() {
        column.clear();
        column.extend(rows.iter().map(|r| r[g]));
        column.sort_by(f64::total_cmp);
        p10.push(percentile(&column, 10));
        median.push(percentile(&column, 50));
        p90.push(percentile(&column, 90));
    }
    CurveBand {
        grid,
        p10,
        median,
        p90,
    }
}

/// Percentile band over `n_resamples` bootstrap resamples (with
/// replacement) of the image set. Deterministic given `seed`; resample `r`
/// draws from an independent stream keyed by `(seed, r)`.
pub fn bootstrap_band(
    scores: &[ConfidenceScore],
    image_scores: &[ImageScore],
    grid: &[f64],
    metric: MetricKind,
    n_resamples: usize,
    seed: u64,
) -> Result<CurveBand, EvaluationError> {
    if grid.is_empty() {
        return Err(EvaluationError::EmptyGrid);
    }
    if n_resamples == 0 {
        return Err(EvaluationError::NoResamples);
    }
    let aligned = align(scores, image_scores, metric)?;
    let n = aligned.values.len();
    let out_grid = rejection_grid();
    let mut rows = Vec::with_capacity(n_resamples);
    let mut values = Vec::with_capacity(n);
    let mut metrics = Vec::with_capacity(n);
    for r in 0..n_resamples {
        let mut rng = stream(seed, &[tags::BOOTSTRAP, r as u64]);
        values.clear();
        metrics.clear();
        for _ in 0..n {
            let i = rng.random_range(0..n);
            values.push(aligned.values[i]);
            metrics.push(aligned.metrics[i]);
        }
        let points = curve_points(&values, &metrics, aligned.higher_is_confident, grid);
        if points.is_empty() {
            // Every threshold emptied the resample; fall back to the
            // zero-rejection point so the row is defined.
            let full = metrics.iter().sum::<f64>() / n as f64;
            rows.push(out_grid.iter().map(|_| full).collect());
            continue;
        }
        let pairs: Vec<(f64, f64)> = points
            .iter()
            .map(|p| (p.rejection_rate, p.metric))
            .collect();
        rows.push(step_on_grid(&pairs, &out_grid));
    }
    Ok(band_from_rows(rows, out_grid))
}

/// Baseline band over uniformly random rejection orders: ordering `o`
/// removes images in a random permutation, evaluating the remaining mean at
/// every prefix.
pub fn random_baseline(
    image_scores: &[ImageScore],
    metric: MetricKind,
    n_orderings: usize,
    seed: u64,
) -> Result<CurveBand, EvaluationError> {
    if image_scores.is_empty() {
        return Err(EvaluationError::EmptyInput);
    }
    if n_orderings == 0 {
        return Err(EvaluationError::NoResamples);
    }
    let metrics: Vec<f64> = image_scores.iter().map(|s| metric.of(s)).collect();
    let n = metrics.len();
    let out_grid = rejection_grid();
    let mut rows = Vec::with_capacity(n_orderings);
    for o in 0..n_orderings {
        // Each ordering is a fresh Fisher-Yates shuffle of the identity on
        // its own stream, so ordering o never depends on ordering o-1.
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = stream(seed, &[tags::RANDOM_ORDER, o as u64]);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        // Suffix sums give the remaining-set mean after each removal.
        let mut suffix = 0.0;
        let mut remaining_mean = Vec::with_capacity(n);
        for &idx in order.iter().rev() {
            suffix += metrics[idx];
            remaining_mean.push(suffix);
        }
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let kept = n - k;
                (k as f64 / n as f64, remaining_mean[kept - 1] / kept as f64)
            })
            .collect();
        rows.push(step_on_grid(&pairs, &out_grid));
    }
    Ok(band_from_rows(rows, out_grid))
}
