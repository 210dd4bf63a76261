//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured values (visible with `--nocapture`).
//!
//! Run with `cargo test -p detconf --test acceptance`.
//!
//! The expected values come from independent oracles implemented in this
//! file (brute-force matching and PR sweeps, rank statistics, replayed RNG
//! streams), never from the library paths they check.

use std::path::Path;
use std::process::Command;

use rand::Rng;

use detconf_core::active_learning::{
    generate_corpus, perturb_ensemble, perturb_prediction, simulate, CorpusParams, ErrorMixture,
    Policy, SimEstimator, SimulationConfig, SimulationLog, SyntheticDetectorConfig,
};
use detconf_core::estimators::{dap, dov, pce, ConfidenceScore, DropoutEnsemble, EstimatorKind};
use detconf_core::evaluation::{
    bootstrap_band, default_threshold_grid, random_baseline, reject_curve, MetricKind,
};
use detconf_core::features::{features_for_prediction, FeatureConfig};
use detconf_core::forest::{fit, mse, predict, ForestModel, ForestParams, RegressionDataset};
use detconf_core::geometry::{Point, Polygon};
use detconf_core::metrics::{
    average_precision, mean_average_precision, GroundTruth, ImageScore, MapConfig,
};
use detconf_core::postprocess::{DetectedObject, Prediction};
use detconf_core::rng::{fnv1a, stream};

// --- shared generators and oracles ---------------------------------------

const SCENE: usize = 24;

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

/// Random rectangle scene with up to `max_objects` objects.
fn random_prediction(rng: &mut impl Rng, max_objects: usize) -> Prediction {
    let n = rng.random_range(0..=max_objects);
    let objects = (0..n)
        .map(|_| {
            let x0 = rng.random_range(0..(SCENE as i64 - 2));
            let y0 = rng.random_range(0..(SCENE as i64 - 2));
            let w = rng.random_range(1..=10);
            let h = rng.random_range(1..=10);
            let prob = (rng.random_range(5..=100) as f64) / 100.0;
            rect_object(
                x0,
                y0,
                (x0 + w).min(SCENE as i64 - 1),
                (y0 + h).min(SCENE as i64 - 1),
                prob,
            )
        })
        .collect();
    Prediction {
        image_id: "scene".into(),
        height: SCENE,
        width: SCENE,
        objects,
    }
}

fn as_ground_truth(pred: &Prediction) -> GroundTruth {
    GroundTruth {
        image_id: pred.image_id.clone(),
        height: pred.height,
        width: pred.width,
        polygons: pred.objects.iter().map(|o| o.polygon.clone()).collect(),
    }
}

/// Brute-force AP oracle: full-image masks, independent greedy scan and an
/// O(n^2) all-point interpolation sweep.
fn brute_average_precision(pred: &Prediction, reference: &GroundTruth, tau: f64) -> f64 {
    let n_refs = reference.polygons.len();
    let mut order: Vec<usize> = (0..pred.objects.len()).collect();
    order.sort_by(|&i, &j| {
        pred.objects[j]
            .mean_prob
            .total_cmp(&pred.objects[i].mean_prob)
            .then(pred.objects[j].pixel_area.cmp(&pred.objects[i].pixel_area))
            .then(i.cmp(&j))
    });
    if order.is_empty() && n_refs == 0 {
        return 1.0;
    }
    if order.is_empty() || n_refs == 0 {
        return 0.0;
    }
    let full_iou = |a: &Polygon, b: &Polygon| -> f64 {
        let ma = a.rasterize(pred.height, pred.width).unwrap();
        let mb = b.rasterize(pred.height, pred.width).unwrap();
        let mut inter = 0u64;
        let mut union = 0u64;
        for (x, y) in ma.as_slice().iter().zip(mb.as_slice()) {
            if *x && *y {
                inter += 1;
            }
            if *x || *y {
                union += 1;
            }
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    };
    let mut taken = vec![false; n_refs];
    let mut flags = Vec::with_capacity(order.len());
    for &pi in &order {
        let mut best = None;
        let mut best_iou = -1.0;
        for (rj, &is_taken) in taken.iter().enumerate() {
            if is_taken {
                continue;
            }
            let iou = full_iou(&pred.objects[pi].polygon, &reference.polygons[rj]);
            if iou >= tau && iou > best_iou {
                best_iou = iou;
                best = Some(rj);
            }
        }
        if let Some(rj) = best {
            taken[rj] = true;
            flags.push(true);
        } else {
            flags.push(false);
        }
    }
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut prev_recall = 0.0;
    for k in 0..flags.len() {
        if flags[k] {
            tp += 1;
        }
        let recall = tp as f64 / n_refs as f64;
        if recall > prev_recall {
            let mut best_precision = 0.0f64;
            let mut tp2 = 0usize;
            for (k2, &f) in flags.iter().enumerate() {
                if f {
                    tp2 += 1;
                }
                if k2 >= k {
                    best_precision = best_precision.max(tp2 as f64 / (k2 + 1) as f64);
                }
            }
            ap += (recall - prev_recall) * best_precision;
            prev_recall = recall;
        }
    }
    ap
}

/// Spearman rank correlation with average ranks for ties.
fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut out = vec![0.0; v.len()];
        let mut k = 0;
        while k < idx.len() {
            let mut m = k;
            while m + 1 < idx.len() && v[idx[m + 1]] == v[idx[k]] {
                m += 1;
            }
            let rank = (k + m) as f64 / 2.0 + 1.0;
            for &i in &idx[k..=m] {
                out[i] = rank;
            }
            k = m + 1;
        }
        out
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

/// Per-image severity used by the synthetic corpora in criteria 4 and 6.
fn injected_severity(seed: u64, image_id: &str) -> f64 {
    let mut rng = stream(seed, &[0x30, fnv1a(image_id.as_bytes())]);
    rng.random()
}

// --- criterion 1 ----------------------------------------------------------

#[test]
fn criterion_1_estimator_unit_suite() {
    let started = std::time::Instant::now();
    let cfg = MapConfig::default();
    let mut rng = stream(0xACC1, &[]);
    let mut cases = 0usize;

    // Identities on structured ensembles.
    for n in [2usize, 5, 10] {
        let member = random_prediction(&mut rng, 4);
        let ensemble = DropoutEnsemble::new(vec![member; n]).unwrap();
        assert_eq!(dap(&ensemble, &cfg).unwrap().value, 1.0);
        assert_eq!(dov(&ensemble).unwrap().value, 0.0);
    }

    // Randomized: PCE mean identity, DOV zero iff equal counts, and
    // permutation invariance of all three, 1000+ cases.
    for case in 0..1000 {
        let n = rng.random_range(2..=6);
        let members: Vec<Prediction> = (0..n).map(|_| random_prediction(&mut rng, 4)).collect();
        let ensemble = DropoutEnsemble::new(members.clone()).unwrap();

        // Independent PCE oracle: reverse-order mean over object means.
        let first = &members[0];
        let expected_pce = if first.objects.is_empty() {
            0.0
        } else {
            first.objects.iter().rev().map(|o| o.mean_prob).sum::<f64>()
                / first.objects.len() as f64
        };
        assert!(
            (pce(first).value - expected_pce).abs() <= 1e-12,
            "case {case}: pce"
        );

        let counts: Vec<usize> = members.iter().map(|m| m.objects.len()).collect();
        let all_equal = counts.windows(2).all(|w| w[0] == w[1]);
        let dov_value = dov(&ensemble).unwrap().value;
        assert_eq!(
            dov_value == 0.0,
            all_equal,
            "case {case}: dov zero iff equal"
        );

        let mut permuted = members.clone();
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        permuted.swap(i, j);
        permuted.reverse();
        let shuffled = DropoutEnsemble::new(permuted).unwrap();
        let dap_a = dap(&ensemble, &cfg).unwrap().value;
        let dap_b = dap(&shuffled, &cfg).unwrap().value;
        assert!(
            (dap_a - dap_b).abs() <= 1e-12,
            "case {case}: dap permutation"
        );
        assert!(
            (dov_value - dov(&shuffled).unwrap().value).abs() <= 1e-12,
            "case {case}: dov permutation"
        );
        let mut reordered = first.clone();
        reordered.objects.reverse();
        assert!(
            (pce(first).value - pce(&reordered).value).abs() <= 1e-12,
            "case {case}: pce object order"
        );
        cases += 1;
    }
    let elapsed = started.elapsed();
    assert!(cases >= 1000);
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("acceptance criterion 1: PASS ({cases} randomized cases in {elapsed:?})");
}

// --- criterion 2 ----------------------------------------------------------

#[test]
fn criterion_2_map_oracle_equivalence() {
    let started = std::time::Instant::now();
    let mut rng = stream(0xACC2, &[]);
    let mut checked = 0usize;
    for case in 0..500 {
        let pred = random_prediction(&mut rng, 5);
        let reference = as_ground_truth(&random_prediction(&mut rng, 5));
        let k = rng.random_range(0..10);
        let tau = (50 + 5 * k) as f64 / 100.0;
        let fast = average_precision(&pred, &reference, tau);
        let brute = brute_average_precision(&pred, &reference, tau);
        assert!(
            (fast - brute).abs() <= 1e-9,
            "case {case}: fast {fast} vs brute {brute} at tau {tau}"
        );
        checked += 1;
    }

    // Worked example: object IoU exactly 0.7 scores mAP 0.5 on the default
    // grid (TP at the five thresholds up to and including 0.70).
    let reference = as_ground_truth(&Prediction {
        image_id: "w".into(),
        height: SCENE,
        width: SCENE,
        objects: vec![rect_object(0, 0, 9, 9, 1.0)],
    });
    let pred = Prediction {
        image_id: "w".into(),
        height: SCENE,
        width: SCENE,
        objects: vec![rect_object(0, 0, 9, 6, 0.9)],
    };
    let map = mean_average_precision(&pred, &reference, &MapConfig::default());
    assert_eq!(map, 0.5, "IoU-0.7 worked example");

    let elapsed = started.elapsed();
    assert!(checked >= 500);
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("acceptance criterion 2: PASS ({checked} scenes + worked example in {elapsed:?})");
}

// --- criterion 3 ----------------------------------------------------------

#[test]
fn criterion_3_dap_equals_pair_enumeration() {
    let started = std::time::Instant::now();
    let cfg = MapConfig::default();
    let mut rng = stream(0xACC3, &[]);
    for n in [2usize, 5, 10] {
        for case in 0..5 {
            let members: Vec<Prediction> = (0..n).map(|_| random_prediction(&mut rng, 4)).collect();
            let ensemble = DropoutEnsemble::new(members.clone()).unwrap();
            let fast = dap(&ensemble, &cfg).unwrap().value;
            // Brute force: every ordered pair through the public mAP entry
            // point, one side converted to ground truth.
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        acc += mean_average_precision(
                            &members[i],
                            &as_ground_truth(&members[j]),
                            &cfg,
                        );
                    }
                }
            }
            let brute = acc / (n * n - n) as f64;
            assert_eq!(fast, brute, "N={n} case {case}");
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("acceptance criterion 3: PASS (exact for N in {{2, 5, 10}} in {elapsed:?})");
}

// --- criterion 4 ----------------------------------------------------------

/// Step interpolation used to align curves on the rejection grid,
/// re-implemented here independently.
fn step_value(points: &[(f64, f64)], g: f64) -> f64 {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut value = sorted[0].1;
    for &(rate, metric) in &sorted {
        if rate <= g {
            value = metric;
        }
    }
    value
}

#[test]
fn criterion_4_reject_curve_properties() {
    let started = std::time::Instant::now();

    // Conventional sweeps, exact.
    let dap_grid = default_threshold_grid(EstimatorKind::Dap);
    assert_eq!(dap_grid.len(), 21);
    for (k, &t) in dap_grid.iter().enumerate() {
        assert_eq!(t, k as f64 / 20.0);
    }
    assert_eq!(dap_grid[1], 0.05);
    let dov_grid = default_threshold_grid(EstimatorKind::Dov);
    assert_eq!(
        dov_grid,
        vec![10.0, 9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0, 0.0]
    );

    // 200-image synthetic set with injected severities; the oracle
    // confidence is the true per-image mAP.
    let corpus = generate_corpus(&CorpusParams {
        n_pool: 200,
        n_test: 0,
        seed: 0xC4,
        ..Default::default()
    })
    .unwrap();
    let mixture = ErrorMixture::default();
    let mut scores = Vec::new();
    let mut image_scores = Vec::new();
    for gt in &corpus.pool {
        let severity = injected_severity(0xC4, &gt.image_id);
        let pred = perturb_prediction(gt, severity, &mixture, 0xC4);
        let map = mean_average_precision(&pred, gt, &MapConfig::default());
        scores.push(ConfidenceScore::new(
            gt.image_id.clone(),
            EstimatorKind::Dap,
            map,
        ));
        image_scores.push(ImageScore {
            image_id: gt.image_id.clone(),
            pixel_iou: map,
            map,
        });
    }

    let curve = reject_curve(&scores, &image_scores, &dap_grid, MetricKind::Map).unwrap();
    for pair in curve.points.windows(2) {
        assert!(
            pair[1].metric >= pair[0].metric - 1e-12,
            "oracle curve must be non-decreasing: {pair:?}"
        );
    }

    // Dominance is checked at matched removal counts: a threshold sweep
    // cannot split a block of tied scores, so the random median is read at
    // each oracle point's own achieved rejection rate. A rank-derived
    // threshold grid gives the oracle a point at every distinct-score
    // prefix, covering the whole rejection axis.
    let mut rank_grid: Vec<f64> = scores.iter().map(|s| s.value).collect();
    rank_grid.sort_by(f64::total_cmp);
    rank_grid.dedup();
    let rank_curve = reject_curve(&scores, &image_scores, &rank_grid, MetricKind::Map).unwrap();
    for pair in rank_curve.points.windows(2) {
        assert!(
            pair[1].metric >= pair[0].metric - 1e-12,
            "rank-grid oracle curve must be non-decreasing: {pair:?}"
        );
    }
    let baseline = random_baseline(&image_scores, MetricKind::Map, 100, 0xC4).unwrap();
    let median_pairs: Vec<(f64, f64)> = baseline
        .grid
        .iter()
        .copied()
        .zip(baseline.median.iter().copied())
        .collect();
    // Small object counts quantize mAP, so distinct scores number well
    // below the image count; every distinct-score prefix is still covered.
    assert!(rank_curve.points.len() >= 20, "rejection axis coverage");
    for point in &rank_curve.points {
        let random_median = step_value(&median_pairs, point.rejection_rate);
        assert!(
            point.metric >= random_median - 1e-12,
            "oracle {} below random median {random_median} at rejection {}",
            point.metric,
            point.rejection_rate
        );
    }

    let band = bootstrap_band(
        &scores,
        &image_scores,
        &dap_grid,
        MetricKind::Map,
        100,
        0xC4,
    )
    .unwrap();
    for g in 0..band.grid.len() {
        assert!(band.p10[g] <= band.median[g] && band.median[g] <= band.p90[g]);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "acceptance criterion 4: PASS (200 images, 100 resamples, dominance at {} achieved rates in {elapsed:?})",
        rank_curve.points.len()
    );
}

// --- criterion 5 ----------------------------------------------------------

fn step_dataset(n: usize, seed: u64) -> RegressionDataset {
    let mut d = RegressionDataset::new();
    let mut rng = stream(seed, &[0x50]);
    for i in 0..n {
        let v: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let y = if v[0] > 0.5 { 1.0 } else { 0.0 };
        d.push(format!("row{i}"), v, y).unwrap();
    }
    d
}

#[test]
fn criterion_5_forest_suite() {
    let started = std::time::Instant::now();

    // Seed determinism, bit-identical predictions.
    let train = step_dataset(100, 0xC5);
    let params = ForestParams {
        seed: 7,
        ..Default::default()
    };
    let a = fit(&train, &params).unwrap();
    let b = fit(&train, &params).unwrap();
    let mut probe_rng = stream(0xC5C5, &[]);
    for _ in 0..100 {
        let x: Vec<f64> = (0..5).map(|_| probe_rng.random::<f64>()).collect();
        assert_eq!(
            predict(&a, &x).unwrap().to_bits(),
            predict(&b, &x).unwrap().to_bits(),
            "determinism"
        );
    }

    // Bounded predictions (leaf values stay inside the target range).
    for _ in 0..200 {
        let x: Vec<f64> = (0..5)
            .map(|_| probe_rng.random::<f64>() * 4.0 - 2.0)
            .collect();
        let y = predict(&a, &x).unwrap();
        assert!((0.0..=1.0).contains(&y), "bounded prediction, got {y}");
    }

    // Constant-target exactness.
    let mut constant = RegressionDataset::new();
    let mut crng = stream(0xC5, &[1]);
    for i in 0..40 {
        let v: Vec<f64> = (0..3).map(|_| crng.random::<f64>()).collect();
        constant.push(format!("c{i}"), v, 0.7).unwrap();
    }
    let cmodel = fit(&constant, &params).unwrap();
    for _ in 0..20 {
        let x: Vec<f64> = (0..3).map(|_| crng.random::<f64>()).collect();
        assert_eq!(
            predict(&cmodel, &x).unwrap(),
            0.7,
            "constant-target exactness"
        );
    }

    // Held-out MSE on the synthetic step dataset.
    let held_out = step_dataset(100, 0xC5 + 1);
    let err = mse(&a, &held_out).unwrap();
    assert!(err < 0.01, "held-out MSE {err}");

    // Lossless model round-trip.
    let mut with_cfg = a.clone();
    with_cfg.feature_config = Some(FeatureConfig::default());
    let restored = ForestModel::decode(&with_cfg.encode()).unwrap();
    assert_eq!(with_cfg, restored);
    for _ in 0..50 {
        let x: Vec<f64> = (0..5).map(|_| probe_rng.random::<f64>()).collect();
        assert_eq!(
            predict(&with_cfg, &x).unwrap().to_bits(),
            predict(&restored, &x).unwrap().to_bits(),
            "round-trip prediction"
        );
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!("acceptance criterion 5: PASS (held-out MSE {err:.5} in {elapsed:?})");
}

// --- criterion 6 ----------------------------------------------------------

#[test]
fn criterion_6_severity_detection() {
    let started = std::time::Instant::now();
    let cfg = MapConfig::default();
    let mixture = ErrorMixture::default();
    let mut rho_dap = Vec::new();
    let mut rho_dov = Vec::new();
    let mut rho_pce = Vec::new();
    let mut rho_rfr = Vec::new();

    for seed in 0..5u64 {
        let corpus = generate_corpus(&CorpusParams {
            n_pool: 300,
            n_test: 0,
            seed: 100 + seed,
            ..Default::default()
        })
        .unwrap();
        let mut severities = Vec::new();
        let (mut unconf_dap, mut var_dov, mut unconf_pce) = (Vec::new(), Vec::new(), Vec::new());
        let mut true_maps = Vec::new();
        let mut vectors = Vec::new();
        for gt in &corpus.pool {
            let severity = injected_severity(200 + seed, &gt.image_id);
            severities.push(severity);
            let base = perturb_prediction(gt, severity, &mixture, 300 + seed);
            let ensemble = perturb_ensemble(gt, severity, &mixture, 1.0, 10, 300 + seed).unwrap();
            unconf_dap.push(1.0 - dap(&ensemble, &cfg).unwrap().value);
            var_dov.push(dov(&ensemble).unwrap().value);
            unconf_pce.push(1.0 - pce(&base).value);
            true_maps.push(mean_average_precision(&base, gt, &cfg));
            vectors.push(features_for_prediction(&base, &FeatureConfig::default()));
        }

        // mAP-RFR trained on the first half, scored on the second half.
        let half = corpus.pool.len() / 2;
        let mut dataset = RegressionDataset::new();
        for i in 0..half {
            dataset
                .push(
                    corpus.pool[i].image_id.clone(),
                    vectors[i].values.clone(),
                    true_maps[i],
                )
                .unwrap();
        }
        let model = fit(
            &dataset,
            &ForestParams {
                seed: 400 + seed,
                ..Default::default()
            },
        )
        .unwrap();
        let mut unconf_rfr = Vec::new();
        let mut severities_half = Vec::new();
        for i in half..corpus.pool.len() {
            unconf_rfr.push(1.0 - predict(&model, &vectors[i].values).unwrap());
            severities_half.push(severities[i]);
        }

        rho_dap.push(spearman(&severities, &unconf_dap));
        rho_dov.push(spearman(&severities, &var_dov));
        rho_pce.push(spearman(&severities, &unconf_pce));
        rho_rfr.push(spearman(&severities_half, &unconf_rfr));
    }

    let (m_dap, m_dov, m_pce, m_rfr) = (
        median(rho_dap),
        median(rho_dov),
        median(rho_pce),
        median(rho_rfr),
    );
    assert!(m_dap > 0.5, "median Spearman severity vs 1-DAP: {m_dap}");
    assert!(m_dov > 0.5, "median Spearman severity vs DOV: {m_dov}");
    assert!(m_pce > 0.5, "median Spearman severity vs 1-PCE: {m_pce}");
    assert!(
        m_rfr > 0.5,
        "median Spearman severity vs 1-mAP-RFR: {m_rfr}"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "acceptance criterion 6: PASS (median rho: dap {m_dap:.3}, dov {m_dov:.3}, pce {m_pce:.3}, rfr {m_rfr:.3} in {elapsed:?})"
    );
}

// --- criterion 7 ----------------------------------------------------------

#[test]
fn criterion_7_active_learning_label_efficiency() {
    let started = std::time::Instant::now();
    // 240-image pool, 60-image test set; random annotates 120 images over
    // 15 rounds of 8. Confidence selection must reach random's final test
    // mAP with at most 60% of those labels (72), median over 5 seeds.
    let budget = 8usize;
    let iterations = 15usize;
    let mut oracle_needed = Vec::new();
    let mut dap_needed = Vec::new();
    let mut random_labels = Vec::new();

    for seed in 0..5u64 {
        let corpus = generate_corpus(&CorpusParams {
            n_pool: 240,
            n_test: 60,
            seed: 50 + seed,
            ..Default::default()
        })
        .unwrap();
        let config = |estimator| SimulationConfig {
            detector: SyntheticDetectorConfig {
                seed: 60 + seed,
                mixture: ErrorMixture {
                    miss: 0.5,
                    ..Default::default()
                },
                ..Default::default()
            },
            estimator,
            policy: Policy::Budget(budget),
            n_iterations: iterations,
            ensemble_size: 10,
            map_config: MapConfig::default(),
        };
        let random = simulate(&corpus, &config(SimEstimator::Random), 70 + seed).unwrap();
        let target = random.records.last().unwrap().test_map;
        random_labels.push(random.records.last().unwrap().cumulative_images);

        let labels_to_reach = |log: &SimulationLog| -> f64 {
            log.records
                .iter()
                .find(|r| r.test_map >= target)
                .map(|r| r.cumulative_images as f64)
                .unwrap_or(f64::INFINITY)
        };
        let oracle = simulate(&corpus, &config(SimEstimator::Oracle), 70 + seed).unwrap();
        let dap_log = simulate(&corpus, &config(SimEstimator::Dap), 70 + seed).unwrap();
        oracle_needed.push(labels_to_reach(&oracle));
        dap_needed.push(labels_to_reach(&dap_log));
    }

    assert!(random_labels.iter().all(|&n| n == budget * iterations));
    let limit = (budget * iterations) as f64 * 0.6;
    let m_oracle = median(oracle_needed.clone());
    let m_dap = median(dap_needed.clone());
    assert!(
        m_oracle <= limit,
        "oracle needs {m_oracle} labels (limit {limit}; per-seed {oracle_needed:?})"
    );
    assert!(
        m_dap <= limit,
        "dap needs {m_dap} labels (limit {limit}; per-seed {dap_needed:?})"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "acceptance criterion 7: PASS (median labels: oracle {m_oracle}, dap {m_dap}, random {} in {elapsed:?})",
        budget * iterations
    );
}

// --- criterion 8 ----------------------------------------------------------

fn run_pipeline(dir: &Path) {
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_detconf"))
            .args(args)
            .output()
            .expect("spawn detconf");
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    run(&[
        "synth",
        "--out-dir",
        &p(""),
        "--seed",
        "99",
        "--images",
        "12",
        "--ensemble",
        "5",
        "--severity-min",
        "0.1",
        "--severity-max",
        "0.9",
    ]);
    run(&[
        "extract",
        "--manifest",
        &p("manifest.json"),
        "--out-dir",
        &p("preds"),
    ]);
    run(&[
        "score",
        "--manifest",
        &p("manifest.json"),
        "--pred-dir",
        &p("preds"),
        "--out",
        &p("scores.csv"),
    ]);
    run(&[
        "confidence",
        "--manifest",
        &p("manifest.json"),
        "--estimator",
        "dap",
        "--out",
        &p("dap.csv"),
    ]);
    run(&[
        "reject-curve",
        "--scores",
        &p("dap.csv"),
        "--image-scores",
        &p("scores.csv"),
        "--out-curve",
        &p("curve.csv"),
        "--out-band",
        &p("band.csv"),
        "--out-random",
        &p("random.csv"),
        "--seed",
        "17",
    ]);
}

#[test]
fn criterion_8_pipeline_reruns_byte_identically() {
    let started = std::time::Instant::now();
    let root = tempfile::tempdir().unwrap();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    run_pipeline(&a);
    run_pipeline(&b);

    let mut compared = 0usize;
    let mut stack = vec![a.clone()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let relative = path.strip_prefix(&a).unwrap();
            let twin = b.join(relative);
            assert_eq!(
                std::fs::read(&path).unwrap(),
                std::fs::read(&twin).unwrap(),
                "outputs differ: {relative:?}"
            );
            compared += 1;
        }
    }
    // Everything the pipeline wrote: maps, gt, manifest, severities,
    // predictions, scores, confidence, curve, band, baseline.
    assert!(compared > 30, "only {compared} files compared");
    let elapsed = started.elapsed();
    println!(
        "acceptance criterion 8: PASS ({compared} files byte-identical across reruns in {elapsed:?})"
    );
}
