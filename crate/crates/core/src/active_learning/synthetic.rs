//! Synthetic detector stand-in: ground-truth corpora and severity-driven
//! prediction corruption.
//!
//! Training a real detector inside the loop would make policy comparisons
//! slow and noisy, so the simulation replaces it with two pieces:
//!
//! * an analytic quality curve (see the simulation module) giving the
//!   detector's quality from the accumulated annotation signal, and
//! * [`synthesize_probability_map`], which corrupts a ground truth into a
//!   probability map whose pathologies scale with a severity in `[0, 1]`:
//!   boundary jitter (dilate/erode), fragmentation (a strip cut through the
//!   object), misses, spurious small blobs around the real objects, and
//!   probabilities degraded toward 0.5.
//!
//! Severity 0 reproduces the rasterized ground truth verbatim at
//! probability 1.0 and consumes no randomness, so all members of an
//! ensemble synthesized at severity 0 are bit-identical.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ActiveLearningError;
use crate::estimators::{DropoutEnsemble, EstimatorError};
use crate::geometry::{BinaryMask, Point, Polygon, Rect};
use crate::metrics::GroundTruth;
use crate::postprocess::{extract_objects, PostprocessConfig, Prediction, ProbabilityMap};
use crate::rng::{fnv1a, stream, tags};

/// Relative intensities of the four corruption modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMixture {
    pub jitter: f64,
    pub fragmentation: f64,
    pub miss: f64,
    pub spurious: f64,
}

impl Default for ErrorMixture {
    fn default() -> Self {
        Self {
            jitter: 1.0,
            fragmentation: 1.0,
            miss: 1.0,
            spurious: 1.0,
        }
    }
}

/// Parameters of the simulated detector.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDetectorConfig {
    /// Quality before any annotation.
    pub q_min: f64,
    /// Quality ceiling as annotations saturate.
    pub q_max: f64,
    /// Signal scale of the saturation curve `q(s) = q_min + (q_max −
    /// q_min)(1 − e^{−s/κ})`.
    pub kappa: f64,
    /// Per-image difficulty is drawn uniformly from this range.
    pub difficulty_min: f64,
    pub difficulty_max: f64,
    pub mixture: ErrorMixture,
    /// How strongly ensemble members re-draw their severity around the
    /// image severity; 0 makes members identical at every severity.
    pub dropout_noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticDetectorConfig {
    fn default() -> Self {
        Self {
            q_min: 0.3,
            q_max: 0.95,
            kappa: 60.0,
            difficulty_min: 0.0,
            difficulty_max: 1.0,
            mixture: ErrorMixture::default(),
            dropout_noise_scale: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticDetectorConfig {
    pub fn validate(&self) -> Result<(), ActiveLearningError> {
        if !(0.0..=1.0).contains(&self.q_min) || !(self.q_min..=1.0).contains(&self.q_max) {
            return Err(ActiveLearningError::InvalidDetector(
                "quality bounds need 0 <= q_min <= q_max <= 1",
            ));
        }
        if !self.kappa.is_finite() || self.kappa <= 0.0 {
            return Err(ActiveLearningError::InvalidDetector(
                "kappa must be positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.difficulty_min)
            || !(self.difficulty_min..=1.0).contains(&self.difficulty_max)
        {
            return Err(ActiveLearningError::InvalidDetector(
                "difficulty range needs 0 <= min <= max <= 1",
            ));
        }
        let weights = [
            self.mixture.jitter,
            self.mixture.fragmentation,
            self.mixture.miss,
            self.mixture.spurious,
        ];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ActiveLearningError::InvalidDetector(
                "mixture weights must be finite and non-negative",
            ));
        }
        if !self.dropout_noise_scale.is_finite() || self.dropout_noise_scale < 0.0 {
            return Err(ActiveLearningError::InvalidDetector(
                "dropout noise scale must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Shape parameters of a generated corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusParams {
    pub n_pool: usize,
    pub n_test: usize,
    pub height: usize,
    pub width: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub seed: u64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            n_pool: 200,
            n_test: 50,
            height: 64,
            width: 64,
            min_objects: 1,
            max_objects: 3,
            seed: 0,
        }
    }
}

impl CorpusParams {
    pub fn validate(&self) -> Result<(), ActiveLearningError> {
        if self.height < 32 || self.width < 32 {
            return Err(ActiveLearningError::InvalidCorpus(
                "images must be at least 32x32 to fit objects",
            ));
        }
        if self.min_objects < 1 || self.max_objects < self.min_objects {
            return Err(ActiveLearningError::InvalidCorpus(
                "object counts need 1 <= min <= max",
            ));
        }
        Ok(())
    }
}

/// An annotation pool and a held-out test set.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub pool: Vec<GroundTruth>,
    pub test: Vec<GroundTruth>,
}

/// Generated objects keep their bounding boxes at least 3 pixels apart so
/// the severity-0 extraction recovers them one-to-one.
const OBJECT_GAP: i64 = 3;
const MIN_SIDE: usize = 14;
const MAX_SIDE: usize = 26;

fn generate_ground_truth(id: String, params: &CorpusParams) -> GroundTruth {
    let mut rng = stream(params.seed, &[tags::CORPUS, fnv1a(id.as_bytes())]);
    let n_objects = rng.random_range(params.min_objects..=params.max_objects);
    let mut taken: Vec<Rect> = Vec::new();
    let mut polygons = Vec::new();
    for _ in 0..n_objects {
        for _attempt in 0..40 {
            let sw = rng.random_range(MIN_SIDE..=MAX_SIDE.min(params.width - 4));
            let sh = rng.random_range(MIN_SIDE..=MAX_SIDE.min(params.height - 4));
            let x0 = rng.random_range(2..=params.width - sw - 2) as i64;
            let y0 = rng.random_range(2..=params.height - sh - 2) as i64;
            let bbox = Rect {
                x_min: x0,
                y_min: y0,
                x_max: x0 + sw as i64 - 1,
                y_max: y0 + sh as i64 - 1,
            };
            let padded = Rect {
                x_min: bbox.x_min - OBJECT_GAP,
                y_min: bbox.y_min - OBJECT_GAP,
                x_max: bbox.x_max + OBJECT_GAP,
                y_max: bbox.y_max + OBJECT_GAP,
            };
            if taken.iter().any(|r| r.intersect(&padded).is_some()) {
                continue;
            }
            let diamond = rng.random::<f64>() < 0.3;
            let (x0f, y0f) = (bbox.x_min as f64, bbox.y_min as f64);
            let (x1f, y1f) = (bbox.x_max as f64, bbox.y_max as f64);
            let polygon = if diamond {
                let (cx, cy) = ((x0f + x1f) / 2.0, (y0f + y1f) / 2.0);
                Polygon::new(vec![
                    Point::new(x0f, cy),
                    Point::new(cx, y0f),
                    Point::new(x1f, cy),
                    Point::new(cx, y1f),
                ])
            } else {
                Polygon::new(vec![
                    Point::new(x0f, y0f),
                    Point::new(x1f, y0f),
                    Point::new(x1f, y1f),
                    Point::new(x0f, y1f),
                ])
            }
            .expect("generated shapes are valid polygons");
            taken.push(bbox);
            polygons.push(polygon);
            break;
        }
    }
    GroundTruth {
        image_id: id,
        height: params.height,
        width: params.width,
        polygons,
    }
}

/// Deterministically generates a pool and test set of synthetic layouts
/// (axis-aligned rectangles and diamonds, pairwise separated).
pub fn generate_corpus(params: &CorpusParams) -> Result<SyntheticCorpus, ActiveLearningError> {
    params.validate()?;
    let pool = (0..params.n_pool)
        .map(|i| generate_ground_truth(format!("pool-{i:04}"), params))
        .collect();
    let test = (0..params.n_test)
        .map(|i| generate_ground_truth(format!("test-{i:04}"), params))
        .collect();
    Ok(SyntheticCorpus { pool, test })
}

fn dilate(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let mut out = BinaryMask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            'scan: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0
                        && ny >= 0
                        && nx < w as i64
                        && ny < h as i64
                        && mask.get(nx as usize, ny as usize)
                    {
                        out.set(x, y, true);
                        break 'scan;
                    }
                }
            }
        }
    }
    out
}

fn erode(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let mut out = BinaryMask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            let mut keep = true;
            'scan: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0
                        || ny < 0
                        || nx >= w as i64
                        || ny >= h as i64
                        || !mask.get(nx as usize, ny as usize)
                    {
                        keep = false;
                        break 'scan;
                    }
                }
            }
            out.set(x, y, keep);
        }
    }
    out
}

/// Clears a 2-pixel strip across the mask's bounding box.
fn cut_strip(mask: &mut BinaryMask, horizontal: bool, frac: f64) {
    let (h, w) = (mask.height(), mask.width());
    let mut x_min = w;
    let mut x_max = 0usize;
    let mut y_min = h;
    let mut y_max = 0usize;
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                x_min = x_min.min(x);
                x_max = x_max.max(x);
                y_min = y_min.min(y);
                y_max = y_max.max(y);
            }
        }
    }
    if x_min > x_max {
        return;
    }
    if horizontal {
        if y_max - y_min < 6 {
            return;
        }
        let cut = y_min + libm::floor((y_max - y_min) as f64 * frac) as usize;
        for y in cut..=(cut + 1).min(y_max) {
            for x in x_min..=x_max {
                mask.set(x, y, false);
            }
        }
    } else {
        if x_max - x_min < 6 {
            return;
        }
        let cut = x_min + libm::floor((x_max - x_min) as f64 * frac) as usize;
        for x in cut..=(cut + 1).min(x_max) {
            for y in y_min..=y_max {
                mask.set(x, y, false);
            }
        }
    }
}

/// Knuth's product method; adequate for the small rates used here.
fn poisson(lambda: f64, rng: &mut ChaCha8Rng) -> usize {
    let limit = libm::exp(-lambda);
    let mut k = 0usize;
    let mut p = 1.0;
    loop {
        p *= rng.random::<f64>();
        if p <= limit || k >= 16 {
            return k;
        }
        k += 1;
    }
}

fn paint(values: &mut [f64], width: usize, mask: &BinaryMask, prob: f64) {
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                let idx = y * width + x;
                values[idx] = values[idx].max(prob);
            }
        }
    }
}

fn paint_map(
    gt: &GroundTruth,
    severity: f64,
    mixture: &ErrorMixture,
    rng: &mut ChaCha8Rng,
) -> ProbabilityMap {
    let (h, w) = (gt.height, gt.width);
    let mut values = vec![0.0f64; h * w];

    if severity == 0.0 {
        for poly in &gt.polygons {
            let mask = poly
                .rasterize(h, w)
                .expect("corpus dimensions are non-zero");
            paint(&mut values, w, &mask, 1.0);
        }
        return ProbabilityMap::new(h, w, values).expect("painted probabilities are in range");
    }

    for poly in &gt.polygons {
        let miss_p = (severity * mixture.miss).min(1.0);
        if rng.random::<f64>() < miss_p {
            continue;
        }
        let mut mask = poly
            .rasterize(h, w)
            .expect("corpus dimensions are non-zero");

        let amplitude = severity * mixture.jitter;
        if amplitude > 0.0 {
            let radius = (libm::round(amplitude * 2.0 * rng.random::<f64>()) as i64).min(3);
            let grow = rng.random::<f64>() < 0.5;
            for _ in 0..radius {
                mask = if grow { dilate(&mask) } else { erode(&mask) };
            }
        }

        let frag_p = (severity * mixture.fragmentation).min(1.0);
        if frag_p > 0.0 && rng.random::<f64>() < frag_p {
            let horizontal = rng.random::<f64>() < 0.5;
            let frac = 0.35 + 0.3 * rng.random::<f64>();
            cut_strip(&mut mask, horizontal, frac);
        }

        if mask.count_set() == 0 {
            continue;
        }
        // Object probability drifts toward 0.5 with severity but never
        // below it, so the pixels still binarize as object.
        let prob = 1.0 - 0.4 * severity * (0.5 + 0.5 * rng.random::<f64>());
        paint(&mut values, w, &mask, prob);
    }

    let rate = severity * mixture.spurious * 2.0;
    if rate > 0.0 {
        let count = poisson(rate, rng).min(8);
        for _ in 0..count {
            let bw = rng.random_range(8..=12).min(w);
            let bh = rng.random_range(8..=12).min(h);
            let x0 = rng.random_range(0..=w - bw);
            let y0 = rng.random_range(0..=h - bh);
            let prob = 0.5 + 0.2 * rng.random::<f64>();
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    let idx = y * w + x;
                    values[idx] = values[idx].max(prob);
                }
            }
        }
    }

    ProbabilityMap::new(h, w, values).expect("painted probabilities are in range")
}

/// Corrupts `gt` into a probability map at the given severity.
///
/// The stream is keyed by `(seed, image id, severity)`: the same quality
/// always reproduces the same map, independent of when or where it is
/// computed.
pub fn synthesize_probability_map(
    gt: &GroundTruth,
    severity: f64,
    mixture: &ErrorMixture,
    seed: u64,
) -> ProbabilityMap {
    let severity = severity.clamp(0.0, 1.0);
    let mut rng = stream(
        seed,
        &[
            tags::PERTURB,
            fnv1a(gt.image_id.as_bytes()),
            severity.to_bits(),
        ],
    );
    paint_map(gt, severity, mixture, &mut rng)
}

/// Member maps of a dropout ensemble: each member re-draws its severity
/// around the image severity (scaled by `noise_scale`) and then corrupts
/// independently. At severity 0 all members are identical.
pub fn synthesize_ensemble_maps(
    gt: &GroundTruth,
    severity: f64,
    mixture: &ErrorMixture,
    noise_scale: f64,
    n: usize,
    seed: u64,
) -> Vec<ProbabilityMap> {
    let severity = severity.clamp(0.0, 1.0);
    (0..n)
        .map(|member| {
            let mut rng = stream(
                seed,
                &[
                    tags::MEMBER,
                    fnv1a(gt.image_id.as_bytes()),
                    severity.to_bits(),
                    member as u64,
                ],
            );
            let member_severity = if severity == 0.0 {
                0.0
            } else {
                (severity * (1.0 + noise_scale * (rng.random::<f64>() - 0.5))).clamp(0.0, 1.0)
            };
            paint_map(gt, member_severity, mixture, &mut rng)
        })
        .collect()
}

/// Corrupted prediction for `gt`: the synthesized map run through the
/// default post-processing.
pub fn perturb_prediction(
    gt: &GroundTruth,
    severity: f64,
    mixture: &ErrorMixture,
    seed: u64,
) -> Prediction {
    let map = synthesize_probability_map(gt, severity, mixture, seed);
    extract_objects(&gt.image_id, &map, &PostprocessConfig::default())
}

/// Dropout ensemble of `n` corrupted predictions.
pub fn perturb_ensemble(
    gt: &GroundTruth,
    severity: f64,
    mixture: &ErrorMixture,
    noise_scale: f64,
    n: usize,
    seed: u64,
) -> Result<DropoutEnsemble, EstimatorError> {
    let cfg = PostprocessConfig::default();
    let members = synthesize_ensemble_maps(gt, severity, mixture, noise_scale, n, seed)
        .iter()
        .map(|map| extract_objects(&gt.image_id, map, &cfg))
        .collect();
    DropoutEnsemble::new(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{dap, dov};
    use crate::metrics::{mean_average_precision, pixel_iou, MapConfig};

    fn small_corpus(seed: u64) -> SyntheticCorpus {
        generate_corpus(&CorpusParams {
            n_pool: 6,
            n_test: 2,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn corpus_is_deterministic_and_in_bounds() {
        let a = small_corpus(3);
        let b = small_corpus(3);
        assert_eq!(a, b);
        for gt in a.pool.iter().chain(&a.test) {
            assert!(!gt.polygons.is_empty());
            for poly in &gt.polygons {
                let bbox = poly.bounding_rect();
                assert!(bbox.x_min >= 0 && bbox.y_min >= 0);
                assert!(bbox.x_max < gt.width as i64 && bbox.y_max < gt.height as i64);
                assert!(
                    poly.rasterize(gt.height, gt.width).unwrap().count_set() >= 50,
                    "objects must survive the default area filter"
                );
            }
        }
    }

    #[test]
    fn corpus_objects_are_separated() {
        let corpus = small_corpus(11);
        for gt in &corpus.pool {
            for i in 0..gt.polygons.len() {
                for j in i + 1..gt.polygons.len() {
                    let a = gt.polygons[i].bounding_rect();
                    let b = gt.polygons[j].bounding_rect();
                    let grown = Rect {
                        x_min: a.x_min - 1,
                        y_min: a.y_min - 1,
                        x_max: a.x_max + 1,
                        y_max: a.y_max + 1,
                    };
                    assert!(grown.intersect(&b).is_none());
                }
            }
        }
    }

    #[test]
    fn severity_zero_reproduces_ground_truth() {
        let corpus = small_corpus(5);
        let mixture = ErrorMixture::default();
        for gt in &corpus.pool {
            let pred = perturb_prediction(gt, 0.0, &mixture, 9);
            assert_eq!(pred.objects.len(), gt.polygons.len());
            for obj in &pred.objects {
                assert_eq!(obj.mean_prob, 1.0);
            }
            assert_eq!(pixel_iou(&pred, gt).unwrap(), 1.0);
            assert_eq!(
                mean_average_precision(&pred, gt, &MapConfig::default()),
                1.0
            );
        }
    }

    #[test]
    fn severity_zero_ensemble_agrees_exactly() {
        let corpus = small_corpus(6);
        let gt = &corpus.pool[0];
        let ensemble = perturb_ensemble(gt, 0.0, &ErrorMixture::default(), 1.0, 5, 13).unwrap();
        assert_eq!(dov(&ensemble).unwrap().value, 0.0);
        assert_eq!(dap(&ensemble, &MapConfig::default()).unwrap().value, 1.0);
    }

    #[test]
    fn full_miss_empties_the_prediction() {
        let corpus = small_corpus(7);
        let mixture = ErrorMixture {
            jitter: 0.0,
            fragmentation: 0.0,
            miss: 1.0,
            spurious: 0.0,
        };
        for gt in &corpus.pool {
            let pred = perturb_prediction(gt, 1.0, &mixture, 21);
            assert!(pred.objects.is_empty());
        }
    }

    #[test]
    fn fragmentation_keeps_most_pixels() {
        // One 20x20 object; a 2-pixel strip removes at most 2*20 pixels, so
        // pixel IoU stays >= 1 - 40/400.
        let gt = GroundTruth {
            image_id: "frag".into(),
            height: 40,
            width: 40,
            polygons: vec![Polygon::new(vec![
                Point::new(10.0, 10.0),
                Point::new(29.0, 10.0),
                Point::new(29.0, 29.0),
                Point::new(10.0, 29.0),
            ])
            .unwrap()],
        };
        let mixture = ErrorMixture {
            jitter: 0.0,
            fragmentation: 1.0,
            miss: 0.0,
            spurious: 0.0,
        };
        for seed in 0..10u64 {
            let pred = perturb_prediction(&gt, 0.5, &mixture, seed);
            assert!(!pred.objects.is_empty());
            let iou = pixel_iou(&pred, &gt).unwrap();
            assert!(
                iou >= 1.0 - 40.0 / 400.0 - 1e-12,
                "iou {iou} at seed {seed}"
            );
        }
    }

    #[test]
    fn spurious_blobs_add_objects() {
        let corpus = small_corpus(8);
        let gt = &corpus.pool[0];
        let mixture = ErrorMixture {
            jitter: 0.0,
            fragmentation: 0.0,
            miss: 0.0,
            spurious: 1.0,
        };
        let mut extra = 0usize;
        for seed in 0..10u64 {
            let pred = perturb_prediction(gt, 1.0, &mixture, seed);
            assert!(pred.objects.len() >= gt.polygons.len());
            extra += pred.objects.len() - gt.polygons.len();
        }
        assert!(extra > 0, "Poisson(2) produced no blobs in 10 draws");
    }

    #[test]
    fn higher_severity_degrades_agreement() {
        let corpus = small_corpus(9);
        let cfg = MapConfig::default();
        let mixture = ErrorMixture::default();
        let mut low_sum = 0.0;
        let mut high_sum = 0.0;
        for gt in &corpus.pool {
            let low = perturb_ensemble(gt, 0.1, &mixture, 1.0, 5, 17).unwrap();
            let high = perturb_ensemble(gt, 0.9, &mixture, 1.0, 5, 17).unwrap();
            low_sum += dap(&low, &cfg).unwrap().value;
            high_sum += dap(&high, &cfg).unwrap().value;
        }
        assert!(
            low_sum > high_sum,
            "mean DAP at severity 0.1 ({low_sum}) should exceed severity 0.9 ({high_sum})"
        );
    }

    #[test]
    fn detector_config_validation() {
        assert!(SyntheticDetectorConfig::default().validate().is_ok());
        let bad = SyntheticDetectorConfig {
            q_min: 0.9,
            q_max: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SyntheticDetectorConfig {
            kappa: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SyntheticDetectorConfig {
            mixture: ErrorMixture {
                miss: -0.1,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
