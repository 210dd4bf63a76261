//! Scores a [`Prediction`] against a reference: pixel IoU of the object
//! unions and PASCAL-VOC-style mean average precision over a grid of IoU
//! thresholds.
//!
//! Matching is greedy and one-to-one: predictions are ranked by confidence
//! (mean probability, ties broken by larger pixel area, then original
//! order) and each one takes the unmatched reference object with the
//! highest pairwise IoU, provided that IoU reaches the threshold. Average
//! precision uses all-point interpolation (the VOC2010+ definition), not
//! the older 11-point sampling.
//!
//! Empty conventions, needed so ensemble agreement is well-defined on blank
//! pages: both sides empty scores 1.0, exactly one side empty scores 0.0.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{BinaryMask, Polygon, Rect};
use crate::postprocess::Prediction;

/// Reference objects for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub polygons: Vec<Polygon>,
}

/// The IoU-threshold grid that the scalar "mAP" averages over.
///
/// The default is the usual 0.50:0.05:0.95 grid; thresholds are built from
/// integer ratios so values like 0.70 are the exact f64 literals.
#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    pub iou_thresholds: Vec<f64>,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect(),
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.iou_thresholds.is_empty() {
            return Err(MetricsError::InvalidThresholds("empty threshold grid"));
        }
        for pair in self.iou_thresholds.windows(2) {
            if pair[1] <= pair[0] {
                return Err(MetricsError::InvalidThresholds(
                    "thresholds must be strictly increasing",
                ));
            }
        }
        for &tau in &self.iou_thresholds {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(MetricsError::InvalidThresholds(
                    "thresholds must lie in (0, 1]",
                ));
            }
        }
        Ok(())
    }
}

/// Per-image evaluation result.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub image_id: String,
    pub pixel_iou: f64,
    pub map: f64,
}

/// Per-image scores plus unweighted means across images.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetScores {
    pub images: Vec<ImageScore>,
    pub mean_pixel_iou: f64,
    pub mean_map: f64,
}

/// Outcome of greedy matching at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(prediction index, reference index, IoU)` in prediction rank order.
    pub matched: Vec<(usize, usize, f64)>,
    /// False-positive prediction indices, in rank order.
    pub unmatched_preds: Vec<usize>,
    /// False-negative reference indices, ascending.
    pub unmatched_refs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("image dimensions differ: prediction {pred:?} vs reference {reference:?}")]
    DimensionMismatch {
        pred: (usize, usize),
        reference: (usize, usize),
    },
    #[error("image ids do not align; missing references: {missing_refs:?}, missing predictions: {missing_preds:?}")]
    IdMismatch {
        missing_refs: Vec<String>,
        missing_preds: Vec<String>,
    },
    #[error("duplicate image id {0:?}")]
    DuplicateId(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid IoU threshold grid: {0}")]
    InvalidThresholds(&'static str),
}

/// A polygon rasterized over its bounding box clipped to the image. The
/// window trick keeps the bits identical to a full-image rasterization.
#[derive(Debug, Clone)]
pub(crate) struct RasterObject {
    window: Option<Rect>,
    mask: BinaryMask,
    count: u64,
}

impl RasterObject {
    pub(crate) fn new(polygon: &Polygon, height: usize, width: usize) -> Self {
        let image = Rect {
            x_min: 0,
            y_min: 0,
            x_max: width as i64 - 1,
            y_max: height as i64 - 1,
        };
        match polygon.bounding_rect().intersect(&image) {
            Some(window) => {
                let mask = polygon.rasterize_window(&window);
                let count = mask.count_set();
                Self {
                    window: Some(window),
                    mask,
                    count,
                }
            }
            None => Self {
                window: None,
                mask: BinaryMask::new(1, 1),
                count: 0,
            },
        }
    }

    pub(crate) fn iou(&self, other: &RasterObject) -> f64 {
        if self.count == 0 || other.count == 0 {
            return 0.0;
        }
        let (wa, wb) = match (&self.window, &other.window) {
            (Some(a), Some(b)) => (a, b),
            _ => return 0.0,
        };
        let overlap = match wa.intersect(wb) {
            Some(r) => r,
            None => return 0.0,
        };
        let mut inter = 0u64;
        for y in overlap.y_min..=overlap.y_max {
            for x in overlap.x_min..=overlap.x_max {
                let in_a = self
                    .mask
                    .get((x - wa.x_min) as usize, (y - wa.y_min) as usize);
                let in_b = other
                    .mask
                    .get((x - wb.x_min) as usize, (y - wb.y_min) as usize);
                if in_a && in_b {
                    inter += 1;
                }
            }
        }
        let union = self.count + other.count - inter;
        inter as f64 / union as f64
    }
}

/// Prediction side of a match: per-object rasters plus the confidence
/// ranking. Preparing once amortizes rasterization across the threshold
/// grid and across ensemble pairs.
#[derive(Debug, Clone)]
pub(crate) struct PreparedPrediction {
    rasters: Vec<RasterObject>,
    order: Vec<usize>,
}

impl PreparedPrediction {
    pub(crate) fn new(pred: &Prediction) -> Self {
        let rasters = pred
            .objects
            .iter()
            .map(|o| RasterObject::new(&o.polygon, pred.height, pred.width))
            .collect();
        let mut order: Vec<usize> = (0..pred.objects.len()).collect();
        order.sort_by(|&i, &j| {
            pred.objects[j]
                .mean_prob
                .total_cmp(&pred.objects[i].mean_prob)
                .then(pred.objects[j].pixel_area.cmp(&pred.objects[i].pixel_area))
                .then(i.cmp(&j))
        });
        Self { rasters, order }
    }
}

/// Reference side of a match: rasters only. When an ensemble member plays
/// reference its probabilities are ignored.
#[derive(Debug, Clone)]
pub(crate) struct PreparedReference {
    rasters: Vec<RasterObject>,
}

impl PreparedReference {
    pub(crate) fn new(reference: &GroundTruth) -> Self {
        Self {
            rasters: reference
                .polygons
                .iter()
                .map(|p| RasterObject::new(p, reference.height, reference.width))
                .collect(),
        }
    }

    pub(crate) fn from_prediction(pred: &Prediction) -> Self {
        Self {
            rasters: pred
                .objects
                .iter()
                .map(|o| RasterObject::new(&o.polygon, pred.height, pred.width))
                .collect(),
        }
    }
}

/// Pairwise object IoUs, `matrix[pred_index][ref_index]`.
pub(crate) fn iou_matrix(
    pred: &PreparedPrediction,
    reference: &PreparedReference,
) -> Vec<Vec<f64>> {
    pred.rasters
        .iter()
        .map(|a| reference.rasters.iter().map(|b| a.iou(b)).collect())
        .collect()
}

fn greedy_match(order: &[usize], matrix: &[Vec<f64>], n_refs: usize, tau: f64) -> MatchResult {
    let mut taken = vec![false; n_refs];
    let mut matched = Vec::new();
    let mut unmatched_preds = Vec::new();
    for &pi in order {
        let mut best: Option<(usize, f64)> = None;
        for (rj, taken_rj) in taken.iter().enumerate() {
            if *taken_rj {
                continue;
            }
            let iou = matrix[pi][rj];
            if iou >= tau && best.is_none_or(|(_, b)| iou > b) {
                best = Some((rj, iou));
            }
        }
        match best {
            Some((rj, iou)) => {
                taken[rj] = true;
                matched.push((pi, rj, iou));
            }
            None => unmatched_preds.push(pi),
        }
    }
    let unmatched_refs = (0..n_refs).filter(|&r| !taken[r]).collect();
    MatchResult {
        matched,
        unmatched_preds,
        unmatched_refs,
    }
}

/// Greedy one-to-one matching of predictions to reference objects at IoU
/// threshold `tau`.
pub fn match_objects(pred: &Prediction, reference: &GroundTruth, tau: f64) -> MatchResult {
    let p = PreparedPrediction::new(pred);
    let r = PreparedReference::new(reference);
    let matrix = iou_matrix(&p, &r);
    greedy_match(&p.order, &matrix, r.rasters.len(), tau)
}

/// All-point-interpolated AP from the per-rank TP flags.
fn ap_from_ranked_flags(is_tp: &[bool], n_refs: usize) -> f64 {
    let n_preds = is_tp.len();
    if n_preds == 0 && n_refs == 0 {
        return 1.0;
    }
    if n_preds == 0 || n_refs == 0 {
        return 0.0;
    }
    let mut precisions = Vec::with_capacity(n_preds);
    let mut recalls = Vec::with_capacity(n_preds);
    let mut tp = 0usize;
    for (k, &flag) in is_tp.iter().enumerate() {
        if flag {
            tp += 1;
        }
        precisions.push(tp as f64 / (k + 1) as f64);
        recalls.push(tp as f64 / n_refs as f64);
    }
    let mut ap = 0.0;
    let mut max_precision = 0.0f64;
    for k in (0..n_preds).rev() {
        max_precision = max_precision.max(precisions[k]);
        let prev_recall = if k == 0 { 0.0 } else { recalls[k - 1] };
        ap += (recalls[k] - prev_recall) * max_precision;
    }
    ap
}

fn ap_prepared(
    pred: &PreparedPrediction,
    reference: &PreparedReference,
    matrix: &[Vec<f64>],
    tau: f64,
) -> f64 {
    let n_refs = reference.rasters.len();
    let result = greedy_match(&pred.order, matrix, n_refs, tau);
    let mut tp_by_rank = vec![false; pred.order.len()];
    let rank_of: Vec<usize> = {
        let mut inv = vec![0usize; pred.order.len()];
        for (rank, &pi) in pred.order.iter().enumerate() {
            inv[pi] = rank;
        }
        inv
    };
    for &(pi, _, _) in &result.matched {
        tp_by_rank[rank_of[pi]] = true;
    }
    ap_from_ranked_flags(&tp_by_rank, n_refs)
}

pub(crate) fn map_prepared(
    pred: &PreparedPrediction,
    reference: &PreparedReference,
    cfg: &MapConfig,
) -> f64 {
    let matrix = iou_matrix(pred, reference);
    let mut acc = 0.0;
    for &tau in &cfg.iou_thresholds {
        acc += ap_prepared(pred, reference, &matrix, tau);
    }
    acc / cfg.iou_thresholds.len() as f64
}

/// Average precision at a single IoU threshold.
pub fn average_precision(pred: &Prediction, reference: &GroundTruth, tau: f64) -> f64 {
    let p = PreparedPrediction::new(pred);
    let r = PreparedReference::new(reference);
    let matrix = iou_matrix(&p, &r);
    ap_prepared(&p, &r, &matrix, tau)
}

/// Mean of [`average_precision`] over the configured threshold grid.
pub fn mean_average_precision(pred: &Prediction, reference: &GroundTruth, cfg: &MapConfig) -> f64 {
    debug_assert!(cfg.validate().is_ok());
    let p = PreparedPrediction::new(pred);
    let r = PreparedReference::new(reference);
    map_prepared(&p, &r, cfg)
}

/// IoU of the unions of predicted and reference object pixels.
///
/// Both sides are rasterized from their polygons. Returns 1.0 when both
/// unions are empty and 0.0 when exactly one is.
pub fn pixel_iou(pred: &Prediction, reference: &GroundTruth) -> Result<f64, MetricsError> {
    if (pred.height, pred.width) != (reference.height, reference.width) {
        return Err(MetricsError::DimensionMismatch {
            pred: (pred.height, pred.width),
            reference: (reference.height, reference.width),
        });
    }
    let mut pred_union = BinaryMask::new(pred.height, pred.width);
    for obj in &pred.objects {
        let mask = obj
            .polygon
            .rasterize(pred.height, pred.width)
            .expect("prediction dimensions are non-zero");
        pred_union.union_with(&mask);
    }
    let mut ref_union = BinaryMask::new(reference.height, reference.width);
    for poly in &reference.polygons {
        let mask = poly
            .rasterize(reference.height, reference.width)
            .expect("reference dimensions are non-zero");
        ref_union.union_with(&mask);
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    for (a, b) in pred_union.as_slice().iter().zip(ref_union.as_slice()) {
        if *a && *b {
            inter += 1;
        }
        if *a || *b {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Pixel IoU and mAP for one image.
pub fn score_image(
    pred: &Prediction,
    reference: &GroundTruth,
    cfg: &MapConfig,
) -> Result<ImageScore, MetricsError> {
    let iou = pixel_iou(pred, reference)?;
    let map = mean_average_precision(pred, reference, cfg);
    Ok(ImageScore {
        image_id: pred.image_id.clone(),
        pixel_iou: iou,
        map,
    })
}

/// Scores every prediction against the reference with the same image id.
///
/// Errors list every unmatched id on either side before any scoring is
/// attempted. Output order follows the prediction order.
pub fn dataset_scores(
    preds: &[Prediction],
    refs: &[GroundTruth],
    cfg: &MapConfig,
) -> Result<DatasetScores, MetricsError> {
    if preds.is_empty() && refs.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let mut ref_by_id = alloc::collections::BTreeMap::new();
    for (i, r) in refs.iter().enumerate() {
        if ref_by_id.insert(r.image_id.as_str(), i).is_some() {
            return Err(MetricsError::DuplicateId(r.image_id.clone()));
        }
    }
    let mut pred_ids = alloc::collections::BTreeSet::new();
    for p in preds {
        if !pred_ids.insert(p.image_id.as_str()) {
            return Err(MetricsError::DuplicateId(p.image_id.clone()));
        }
    }
    let missing_refs: Vec<String> = preds
        .iter()
        .filter(|p| !ref_by_id.contains_key(p.image_id.as_str()))
        .map(|p| p.image_id.clone())
        .collect();
    let missing_preds: Vec<String> = refs
        .iter()
        .filter(|r| !pred_ids.contains(r.image_id.as_str()))
        .map(|r| r.image_id.clone())
        .collect();
    if !missing_refs.is_empty() || !missing_preds.is_empty() {
        return Err(MetricsError::IdMismatch {
            missing_refs,
            missing_preds,
        });
    }

    let mut images = Vec::with_capacity(preds.len());
    for pred in preds {
        let reference = &refs[ref_by_id[pred.image_id.as_str()]];
        images.push(score_image(pred, reference, cfg)?);
    }
    let n = images.len() as f64;
    let mean_pixel_iou = images.iter().map(|s| s.pixel_iou).sum::<f64>() / n;
    let mean_map = images.iter().map(|s| s.map).sum::<f64>() / n;
    Ok(DatasetScores {
        images,
        mean_pixel_iou,
        mean_map,
    })
}
