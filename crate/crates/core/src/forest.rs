//! Random-forest regression mapping a feature vector to an estimated mAP.
//!
//! CART regression trees grown on bootstrap resamples with the
//! variance-reduction split criterion. Everything is pinned for
//! determinism: split thresholds are midpoints of consecutive sorted unique
//! feature values, gain ties break toward the lowest feature index and then
//! the lowest threshold, and each tree draws from an independent RNG stream
//! derived from `(seed, tree index)` so concurrent tree construction cannot
//! change the result.
//!
//! Defaults (100 trees, unlimited depth, all features per split, bootstrap
//! samples the size of the training set) mirror common regression-forest
//! toolkit defaults, stated here explicitly rather than by reference.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::features::FeatureConfig;
use crate::rng::{stream, tags};

/// Sentinel feature index marking a leaf node.
const LEAF: u32 = u32::MAX;

/// Model file magic.
const MAGIC: [u8; 4] = *b"RFRM";
const FORMAT_VERSION: u16 = 1;

/// Forest hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` = grow until pure or below the split minimum.
    pub max_depth: Option<u32>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Number of features considered per split; `None` = all.
    pub features_per_split: Option<usize>,
    /// Draw an n-of-n bootstrap resample per tree; when false every tree
    /// sees the full training set.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForestError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("row {row} has {got} features, expected {expected}")]
    InconsistentRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("target {value} at row {row} is outside [0, 1]")]
    TargetOutOfRange { row: usize, value: f64 },
    #[error("input vector has {got} features, model expects {expected}")]
    VectorLengthMismatch { expected: usize, got: usize },
    #[error("invalid forest parameters: {0}")]
    InvalidParams(&'static str),
    #[error("no out-of-bag rows; enable bootstrap to measure OOB error")]
    NoOutOfBagRows,
    #[error("model file: bad magic {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("model file: unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("model file: truncated at byte {offset}, needed {needed} more")]
    Truncated { offset: usize, needed: usize },
    #[error("model file: {len} trailing bytes after byte {offset}")]
    TrailingBytes { offset: usize, len: usize },
    #[error("model file: invalid field at byte {offset}: {reason}")]
    InvalidField { offset: usize, reason: &'static str },
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees < 1 {
            return Err(ForestError::InvalidParams("n_trees must be at least 1"));
        }
        if self.min_samples_split < 2 {
            return Err(ForestError::InvalidParams(
                "min_samples_split must be at least 2",
            ));
        }
        if self.min_samples_leaf < 1 {
            return Err(ForestError::InvalidParams(
                "min_samples_leaf must be at least 1",
            ));
        }
        if self.features_per_split == Some(0) {
            return Err(ForestError::InvalidParams(
                "features_per_split must be at least 1 when set",
            ));
        }
        if self.max_depth == Some(0) {
            return Err(ForestError::InvalidParams(
                "max_depth must be at least 1 when set",
            ));
        }
        Ok(())
    }
}

/// Training rows: id, feature vector and target mAP in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegressionDataset {
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl RegressionDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: String, vector: Vec<f64>, target: f64) -> Result<(), ForestError> {
        if let Some(first) = self.vectors.first() {
            if vector.len() != first.len() {
                return Err(ForestError::InconsistentRow {
                    row: self.vectors.len(),
                    expected: first.len(),
                    got: vector.len(),
                });
            }
        }
        if !(0.0..=1.0).contains(&target) {
            return Err(ForestError::TargetOutOfRange {
                row: self.vectors.len(),
                value: target,
            });
        }
        self.ids.push(id);
        self.vectors.push(vector);
        self.targets.push(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn n_features(&self) -> Option<usize> {
        self.vectors.first().map(Vec::len)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    /// Split feature, or [`LEAF`].
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    /// Mean target of the node's training rows (used when leaf).
    value: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            let node = &self.nodes[idx];
            if node.feature == LEAF {
                return node.value;
            }
            idx = if x[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }
}

/// A trained forest. Predictions are means of per-tree leaf values, so they
/// stay inside the training-target range.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub params: ForestParams,
    pub n_features: usize,
    /// Binning configuration of the training features, carried along so
    /// inference can recompute identical vectors. `None` for models trained
    /// on externally produced vectors.
    pub feature_config: Option<FeatureConfig>,
    trees: Vec<Tree>,
}

impl ForestModel {
    /// Digest of the embedded feature configuration, if any.
    pub fn fingerprint(&self) -> Option<u64> {
        self.feature_config.as_ref().map(FeatureConfig::fingerprint)
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

struct SplitJob {
    node: usize,
    rows: Vec<usize>,
    depth: u32,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn grow_tree(
    vectors: &[Vec<f64>],
    targets: &[f64],
    rows: Vec<usize>,
    params: &ForestParams,
    rng: &mut impl Rng,
) -> Tree {
    let n_features = vectors[0].len();
    let mut nodes = vec![Node {
        feature: LEAF,
        threshold: 0.0,
        left: 0,
        right: 0,
        value: 0.0,
    }];
    let mut jobs = vec![SplitJob {
        node: 0,
        rows,
        depth: 0,
    }];
    let mut feature_pool: Vec<usize> = (0..n_features).collect();
    let mut sorted: Vec<(f64, f64)> = Vec::new();

    while let Some(job) = jobs.pop() {
        let n = job.rows.len();
        let sum: f64 = job.rows.iter().map(|&r| targets[r]).sum();
        let (lo, hi) = job
            .rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(targets[r]), hi.max(targets[r]))
            });
        // A pure node keeps the constant exactly instead of re-averaging it.
        nodes[job.node].value = if lo == hi { lo } else { sum / n as f64 };

        let depth_ok = params.max_depth.is_none_or(|d| job.depth < d);
        if n < params.min_samples_split || !depth_ok || lo == hi {
            continue;
        }
        let sum_sq: f64 = job.rows.iter().map(|&r| targets[r] * targets[r]).sum();
        let parent_sse = sum_sq - sum * sum / n as f64;
        if parent_sse <= 0.0 {
            continue;
        }

        // Candidate features, ascending so gain ties resolve to the lowest
        // index.
        let candidates: &[usize] = match params.features_per_split {
            Some(m) if m < n_features => {
                for k in 0..m {
                    let j = rng.random_range(k..n_features);
                    feature_pool.swap(k, j);
                }
                feature_pool[..m].sort_unstable();
                &feature_pool[..m]
            }
            _ => &feature_pool[..],
        };

        let mut best: Option<BestSplit> = None;
        for &f in candidates {
            sorted.clear();
            sorted.extend(job.rows.iter().map(|&r| (vectors[r][f], targets[r])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            for k in 1..n {
                let (xv, yv) = sorted[k - 1];
                left_sum += yv;
                left_sq += yv * yv;
                if xv == sorted[k].0 {
                    continue;
                }
                if k < params.min_samples_leaf || n - k < params.min_samples_leaf {
                    continue;
                }
                let right_sum = sum - left_sum;
                let right_sq = sum_sq - left_sq;
                let sse_left = left_sq - left_sum * left_sum / k as f64;
                let sse_right = right_sq - right_sum * right_sum / (n - k) as f64;
                let gain = parent_sse - sse_left - sse_right;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let midpoint = (xv + sorted[k].0) / 2.0;
                    // Keep rows with the left value routed left even when the
                    // midpoint rounds up onto the right value.
                    let threshold = if midpoint < sorted[k].0 { midpoint } else { xv };
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }

        let Some(split) = best else { continue };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = job
            .rows
            .iter()
            .partition(|&&r| vectors[r][split.feature] <= split.threshold);
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

        let left = nodes.len();
        nodes.push(Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value: 0.0,
        });
        let right = nodes.len();
        nodes.push(Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value: 0.0,
        });
        let node = &mut nodes[job.node];
        node.feature = split.feature as u32;
        node.threshold = split.threshold;
        node.left = left as u32;
        node.right = right as u32;
        jobs.push(SplitJob {
            node: right,
            rows: right_rows,
            depth: job.depth + 1,
        });
        jobs.push(SplitJob {
            node: left,
            rows: left_rows,
            depth: job.depth + 1,
        });
    }
    Tree { nodes }
}

fn bootstrap_rows(n: usize, params: &ForestParams, tree_index: usize) -> Vec<usize> {
    if params.bootstrap {
        let mut rng = stream(params.seed, &[tags::TREE, tree_index as u64]);
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    }
}

fn fit_trees(
    d: &RegressionDataset,
    params: &ForestParams,
) -> Result<Vec<(Tree, Vec<usize>)>, ForestError> {
    params.validate()?;
    if d.is_empty() {
        return Err(ForestError::EmptyDataset);
    }
    let n = d.len();
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let rows = bootstrap_rows(n, params, t);
        // The node-level stream is separate from the bootstrap draw so
        // feature subsampling cannot shift the resample.
        let mut rng = stream(params.seed, &[tags::TREE, t as u64, 1]);
        let tree = grow_tree(d.vectors(), d.targets(), rows.clone(), params, &mut rng);
        trees.push((tree, rows));
    }
    Ok(trees)
}

/// Trains a forest. Deterministic given `params.seed`.
pub fn fit(d: &RegressionDataset, params: &ForestParams) -> Result<ForestModel, ForestError> {
    let trees = fit_trees(d, params)?
        .into_iter()
        .map(|(tree, _)| tree)
        .collect();
    Ok(ForestModel {
        params: params.clone(),
        n_features: d.n_features().unwrap_or(0),
        feature_config: None,
        trees,
    })
}

/// Mean of the per-tree leaf values for `x`. When every tree agrees the
/// common value is returned as-is, so constant-target models and
/// identical-tree ensembles reproduce their value exactly.
pub fn predict(model: &ForestModel, x: &[f64]) -> Result<f64, ForestError> {
    if x.len() != model.n_features {
        return Err(ForestError::VectorLengthMismatch {
            expected: model.n_features,
            got: x.len(),
        });
    }
    let first = model.trees[0].predict(x);
    let mut sum = 0.0;
    let mut all_equal = true;
    for tree in &model.trees {
        let value = tree.predict(x);
        all_equal &= value == first;
        sum += value;
    }
    if all_equal {
        return Ok(first);
    }
    Ok(sum / model.trees.len() as f64)
}

/// Mean squared prediction error over a dataset.
pub fn mse(model: &ForestModel, d: &RegressionDataset) -> Result<f64, ForestError> {
    if d.is_empty() {
        return Err(ForestError::EmptyDataset);
    }
    let mut acc = 0.0;
    for (x, &y) in d.vectors().iter().zip(d.targets()) {
        let e = predict(model, x)? - y;
        acc += e * e;
    }
    Ok(acc / d.len() as f64)
}

/// Out-of-bag MSE: each row is predicted by the trees whose bootstrap
/// resample did not contain it. Rows in every resample are skipped.
pub fn oob_mse(d: &RegressionDataset, params: &ForestParams) -> Result<f64, ForestError> {
    let trees = fit_trees(d, params)?;
    let n = d.len();
    let mut in_bag = vec![vec![false; n]; trees.len()];
    for (t, (_, rows)) in trees.iter().enumerate() {
        for &r in rows {
            in_bag[t][r] = true;
        }
    }
    let mut acc = 0.0;
    let mut counted = 0usize;
    for (r, (vector, &target)) in d.vectors().iter().zip(d.targets()).enumerate() {
        let mut sum = 0.0;
        let mut k = 0usize;
        for (t, (tree, _)) in trees.iter().enumerate() {
            if !in_bag[t][r] {
                sum += tree.predict(vector);
                k += 1;
            }
        }
        if k > 0 {
            let e = sum / k as f64 - target;
            acc += e * e;
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(ForestError::NoOutOfBagRows);
    }
    Ok(acc / counted as f64)
}

// --- binary model codec -------------------------------------------------
//
// Little-endian throughout; self-describing: magic, format version,
// hyperparameters, optional feature configuration, then flattened node
// arrays per tree. `decode` validates structure (children must point
// forward) so a corrupt file never yields a partial model.

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ForestError> {
        if self.pos + n > self.buf.len() {
            return Err(ForestError::Truncated {
                offset: self.buf.len(),
                needed: self.pos + n - self.buf.len(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, ForestError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ForestError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, ForestError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ForestError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ForestError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl ForestModel {
    /// Serializes the model; `decode` restores it bit-identically.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(&MAGIC);
        w.u16(FORMAT_VERSION);
        w.u16(0); // reserved
        w.u32(self.n_features as u32);
        match &self.feature_config {
            Some(cfg) => {
                w.u8(1);
                w.u32(cfg.bins as u32);
                w.u8(u8::from(cfg.normalize));
                for &(lo, hi) in &cfg.ranges {
                    w.f64(lo);
                    w.f64(hi);
                }
            }
            None => w.u8(0),
        }
        w.u32(self.params.n_trees as u32);
        w.u32(self.params.max_depth.unwrap_or(0));
        w.u32(self.params.min_samples_split as u32);
        w.u32(self.params.min_samples_leaf as u32);
        w.u32(self.params.features_per_split.unwrap_or(0) as u32);
        w.u8(u8::from(self.params.bootstrap));
        w.u64(self.params.seed);
        for tree in &self.trees {
            w.u32(tree.nodes.len() as u32);
            for node in &tree.nodes {
                w.u32(node.feature);
                w.f64(node.threshold);
                w.u32(node.left);
                w.u32(node.right);
                w.f64(node.value);
            }
        }
        w.buf
    }

    /// Parses a serialized model, validating structure; errors carry the
    /// byte offset they were detected at.
    pub fn decode(bytes: &[u8]) -> Result<Self, ForestError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        if magic != MAGIC {
            return Err(ForestError::BadMagic { found: magic });
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(ForestError::UnsupportedVersion(version));
        }
        r.u16()?; // reserved
        let n_features = r.u32()? as usize;
        let feature_config = match r.u8()? {
            0 => None,
            1 => {
                let bins = r.u32()? as usize;
                let normalize = r.u8()? != 0;
                let mut ranges = [(0.0, 0.0); crate::features::FEATURE_COUNT];
                for range in &mut ranges {
                    range.0 = r.f64()?;
                    range.1 = r.f64()?;
                }
                let cfg = FeatureConfig {
                    bins,
                    ranges,
                    normalize,
                };
                if cfg.validate().is_err() {
                    return Err(ForestError::InvalidField {
                        offset: r.pos,
                        reason: "embedded feature configuration is invalid",
                    });
                }
                Some(cfg)
            }
            _ => {
                return Err(ForestError::InvalidField {
                    offset: r.pos - 1,
                    reason: "feature-config flag must be 0 or 1",
                })
            }
        };
        let n_trees = r.u32()? as usize;
        let max_depth = match r.u32()? {
            0 => None,
            d => Some(d),
        };
        let min_samples_split = r.u32()? as usize;
        let min_samples_leaf = r.u32()? as usize;
        let features_per_split = match r.u32()? {
            0 => None,
            m => Some(m as usize),
        };
        let bootstrap = r.u8()? != 0;
        let seed = r.u64()?;
        let params = ForestParams {
            n_trees,
            max_depth,
            min_samples_split,
            min_samples_leaf,
            features_per_split,
            bootstrap,
            seed,
        };
        params.validate().map_err(|_| ForestError::InvalidField {
            offset: r.pos,
            reason: "stored parameters fail validation",
        })?;

        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = r.u32()? as usize;
            if n_nodes == 0 {
                return Err(ForestError::InvalidField {
                    offset: r.pos - 4,
                    reason: "tree has no nodes",
                });
            }
            let mut nodes = Vec::with_capacity(n_nodes);
            for idx in 0..n_nodes {
                let offset = r.pos;
                let feature = r.u32()?;
                let threshold = r.f64()?;
                let left = r.u32()?;
                let right = r.u32()?;
                let value = r.f64()?;
                if !value.is_finite() {
                    return Err(ForestError::InvalidField {
                        offset,
                        reason: "leaf value is not finite",
                    });
                }
                if feature != LEAF {
                    let forward = |c: u32| (c as usize) > idx && (c as usize) < n_nodes;
                    if feature as usize >= n_features
                        || !threshold.is_finite()
                        || !forward(left)
                        || !forward(right)
                    {
                        return Err(ForestError::InvalidField {
                            offset,
                            reason: "split node is inconsistent",
                        });
                    }
                }
                nodes.push(Node {
                    feature,
                    threshold,
                    left,
                    right,
                    value,
                });
            }
            trees.push(Tree { nodes });
        }
        if r.pos != bytes.len() {
            return Err(ForestError::TrailingBytes {
                offset: r.pos,
                len: bytes.len() - r.pos,
            });
        }
        Ok(ForestModel {
            params,
            n_features,
            feature_config,
            trees,
        })
    }
}
