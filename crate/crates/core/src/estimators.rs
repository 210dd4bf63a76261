//! Training-free confidence estimators for a detection result.
//!
//! * **PCE** — mean over detected objects of each object's mean pixel
//!   probability. Cheap, but inherits the detector's overconfidence.
//! * **DAP** — mean pairwise mAP across an N-member dropout ensemble:
//!   `DAP = 1/(N²−N) · Σ_{i≠j} mAP(p_i, p_j)`, each ordered pair scored
//!   with one side arbitrarily treated as ground truth. 1.0 means the
//!   members agree perfectly.
//! * **DOV** — population variance of the per-member object counts:
//!   `DOV = 1/N · Σ (n_i − n̄)²`. 0 means every member predicted the same
//!   number of objects; unlike the others, *lower* means more confident.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::metrics::{map_prepared, MapConfig, PreparedPrediction, PreparedReference};
use crate::postprocess::Prediction;

/// Which estimator produced a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EstimatorKind {
    Pce,
    Dap,
    Dov,
    MapRfr,
}

impl EstimatorKind {
    /// DOV is a variance (higher = less confident); the others are
    /// agreement/probability scores in `[0, 1]`.
    pub fn higher_is_confident(self) -> bool {
        !matches!(self, EstimatorKind::Dov)
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Pce => "pce",
            EstimatorKind::Dap => "dap",
            EstimatorKind::Dov => "dov",
            EstimatorKind::MapRfr => "map-rfr",
        }
    }
}

/// A confidence value for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceScore {
    pub image_id: String,
    pub estimator: EstimatorKind,
    pub value: f64,
    pub higher_is_confident: bool,
}

impl ConfidenceScore {
    pub fn new(image_id: String, estimator: EstimatorKind, value: f64) -> Self {
        Self {
            image_id,
            estimator,
            value,
            higher_is_confident: estimator.higher_is_confident(),
        }
    }
}

/// N predictions of the same image obtained with dropout active.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutEnsemble {
    image_id: String,
    predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("ensemble must contain at least one prediction")]
    EmptyEnsemble,
    #[error("ensemble needs at least 2 members for dropout scores, got {0}")]
    InsufficientEnsemble(usize),
    #[error("ensemble member {index} has dimensions {got:?}, expected {expected:?}")]
    DimensionMismatch {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
}

impl DropoutEnsemble {
    /// All members must share image dimensions; the ensemble takes its
    /// image id from the first member.
    pub fn new(predictions: Vec<Prediction>) -> Result<Self, EstimatorError> {
        let first = predictions.first().ok_or(EstimatorError::EmptyEnsemble)?;
        let expected = (first.height, first.width);
        for (index, p) in predictions.iter().enumerate() {
            if (p.height, p.width) != expected {
                return Err(EstimatorError::DimensionMismatch {
                    index,
                    expected,
                    got: (p.height, p.width),
                });
            }
        }
        Ok(Self {
            image_id: first.image_id.clone(),
            predictions,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn members(&self) -> &[Prediction] {
        &self.predictions
    }
}

/// Posterior-probability confidence: mean over objects of their mean pixel
/// probability. An empty prediction scores 0.0, the conservative choice for
/// annotation selection (surfaced to callers through the object count).
pub fn pce(pred: &Prediction) -> ConfidenceScore {
    let value = if pred.objects.is_empty() {
        0.0
    } else {
        pred.objects.iter().map(|o| o.mean_prob).sum::<f64>() / pred.objects.len() as f64
    };
    ConfidenceScore::new(pred.image_id.clone(), EstimatorKind::Pce, value)
}

/// Dropout average precision over all ordered member pairs.
///
/// Pairs are enumerated in fixed `(i, j)` index order so the sum is
/// bit-reproducible; the result is invariant to member permutation up to
/// floating-point reassociation.
pub fn dap(ensemble: &DropoutEnsemble, cfg: &MapConfig) -> Result<ConfidenceScore, EstimatorError> {
    let n = ensemble.len();
    if n < 2 {
        return Err(EstimatorError::InsufficientEnsemble(n));
    }
    let as_pred: Vec<PreparedPrediction> = ensemble
        .predictions
        .iter()
        .map(PreparedPrediction::new)
        .collect();
    let as_ref: Vec<PreparedReference> = ensemble
        .predictions
        .iter()
        .map(PreparedReference::from_prediction)
        .collect();
    let mut acc = 0.0;
    for (i, member) in as_pred.iter().enumerate() {
        for (j, reference) in as_ref.iter().enumerate() {
            if i != j {
                acc += map_prepared(member, reference, cfg);
            }
        }
    }
    let value = acc / (n * n - n) as f64;
    Ok(ConfidenceScore::new(
        ensemble.image_id.clone(),
        EstimatorKind::Dap,
        value,
    ))
}

/// Dropout object variance: population variance (divide by N) of the
/// per-member object counts.
pub fn dov(ensemble: &DropoutEnsemble) -> Result<ConfidenceScore, EstimatorError> {
    let n = ensemble.len();
    if n < 2 {
        return Err(EstimatorError::InsufficientEnsemble(n));
    }
    let counts: Vec<f64> = ensemble
        .predictions
        .iter()
        .map(|p| p.object_count() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let value = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n as f64;
    Ok(ConfidenceScore::new(
        ensemble.image_id.clone(),
        EstimatorKind::Dov,
        value,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, Polygon};
    use crate::postprocess::DetectedObject;
    use alloc::string::ToString;
    use alloc::vec;

    fn rect_object(x0: i64, y0: i64, x1: i64, y1: i64, mean_prob: f64) -> DetectedObject {
        let polygon = Polygon::new(vec![
            Point::new(x0 as f64, y0 as f64),
            Point::new(x1 as f64, y0 as f64),
            Point::new(x1 as f64, y1 as f64),
            Point::new(x0 as f64, y1 as f64),
        ])
        .unwrap();
        let bbox = polygon.bounding_rect();
        DetectedObject {
            polygon,
            bbox,
            pixel_area: ((x1 - x0 + 1) * (y1 - y0 + 1)) as u64,
            mean_prob,
        }
    }

    fn pred(objects: Vec<DetectedObject>) -> Prediction {
        Prediction {
            image_id: "img".to_string(),
            height: 32,
            width: 32,
            objects,
        }
    }

    #[test]
    fn pce_single_object() {
        let score = pce(&pred(vec![rect_object(0, 0, 9, 9, 0.9)]));
        assert_eq!(score.value, 0.9);
        assert!(score.higher_is_confident);
    }

    #[test]
    fn pce_mean_of_object_means() {
        let score = pce(&pred(vec![
            rect_object(0, 0, 9, 9, 0.8),
            rect_object(12, 12, 21, 21, 0.6),
        ]));
        assert!((score.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn pce_empty_prediction_is_zero() {
        assert_eq!(pce(&pred(vec![])).value, 0.0);
    }

    #[test]
    fn dap_identical_members_is_one() {
        let member = pred(vec![rect_object(2, 2, 11, 11, 0.9)]);
        for n in [2usize, 4] {
            let ensemble = DropoutEnsemble::new(vec![member.clone(); n]).unwrap();
            let score = dap(&ensemble, &MapConfig::default()).unwrap();
            assert_eq!(score.value, 1.0);
        }
    }

    #[test]
    fn dap_empty_vs_nonempty_is_zero() {
        let ensemble = DropoutEnsemble::new(vec![
            pred(vec![rect_object(2, 2, 11, 11, 0.9)]),
            pred(vec![]),
        ])
        .unwrap();
        assert_eq!(dap(&ensemble, &MapConfig::default()).unwrap().value, 0.0);
    }

    #[test]
    fn dap_two_agreeing_one_disjoint_is_third() {
        let a = pred(vec![rect_object(2, 2, 11, 11, 0.9)]);
        let c = pred(vec![rect_object(20, 20, 29, 29, 0.9)]);
        let ensemble = DropoutEnsemble::new(vec![a.clone(), a, c]).unwrap();
        let score = dap(&ensemble, &MapConfig::default()).unwrap();
        assert!((score.value - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dap_requires_two_members() {
        let ensemble = DropoutEnsemble::new(vec![pred(vec![])]).unwrap();
        assert_eq!(
            dap(&ensemble, &MapConfig::default()).unwrap_err(),
            EstimatorError::InsufficientEnsemble(1)
        );
    }

    #[test]
    fn dov_equal_counts_is_zero() {
        let member = pred(vec![rect_object(2, 2, 11, 11, 0.9)]);
        let ensemble = DropoutEnsemble::new(vec![member.clone(); 3]).unwrap();
        let score = dov(&ensemble).unwrap();
        assert_eq!(score.value, 0.0);
        assert!(!score.higher_is_confident);
    }

    #[test]
    fn dov_counts_one_and_five() {
        let one = pred(vec![rect_object(0, 0, 9, 9, 0.9)]);
        let five = pred(vec![
            rect_object(0, 0, 3, 3, 0.9),
            rect_object(6, 0, 9, 3, 0.9),
            rect_object(0, 6, 3, 9, 0.9),
            rect_object(6, 6, 9, 9, 0.9),
            rect_object(12, 12, 15, 15, 0.9),
        ]);
        let ensemble = DropoutEnsemble::new(vec![one, five]).unwrap();
        assert_eq!(dov(&ensemble).unwrap().value, 4.0);
    }

    #[test]
    fn dov_counts_two_two_two_six() {
        let two = || {
            pred(vec![
                rect_object(0, 0, 3, 3, 0.9),
                rect_object(8, 8, 11, 11, 0.9),
            ])
        };
        let six = pred(vec![
            rect_object(0, 0, 2, 2, 0.9),
            rect_object(4, 0, 6, 2, 0.9),
            rect_object(8, 0, 10, 2, 0.9),
            rect_object(0, 4, 2, 6, 0.9),
            rect_object(4, 4, 6, 6, 0.9),
            rect_object(8, 4, 10, 6, 0.9),
        ]);
        let ensemble = DropoutEnsemble::new(vec![two(), two(), two(), six]).unwrap();
        assert_eq!(dov(&ensemble).unwrap().value, 3.0);
    }

    #[test]
    fn ensemble_rejects_mismatched_dimensions() {
        let a = pred(vec![]);
        let mut b = pred(vec![]);
        b.width = 16;
        assert!(matches!(
            DropoutEnsemble::new(vec![a, b]),
            Err(EstimatorError::DimensionMismatch { index: 1, .. })
        ));
    }
}
