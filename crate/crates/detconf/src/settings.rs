//! Configuration files and flag precedence.
//!
//! Every subcommand resolves its effective settings the same way: built-in
//! defaults, overridden by the optional `--config` JSON file, overridden by
//! explicit flags. The resolved values go into the output header digest, so
//! a change through any of the three layers shows up in the outputs.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use detconf_core::active_learning::{
    CorpusParams, ErrorMixture, Policy, SimEstimator, SyntheticDetectorConfig,
};
use detconf_core::features::{FeatureConfig, FEATURE_COUNT};
use detconf_core::forest::ForestParams;
use detconf_core::metrics::MapConfig;
use detconf_core::postprocess::{Connectivity, PostprocessConfig};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub postprocess: Option<PostprocessSection>,
    pub map: Option<MapSection>,
    pub features: Option<FeaturesSection>,
    pub forest: Option<ForestSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostprocessSection {
    pub binarize_threshold: Option<f64>,
    pub connectivity: Option<u8>,
    pub min_area_px: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub iou_thresholds: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSection {
    pub bins: Option<usize>,
    pub normalize: Option<bool>,
    pub ranges: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestSection {
    pub n_trees: Option<usize>,
    pub max_depth: Option<u32>,
    pub min_samples_split: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub features_per_split: Option<usize>,
    pub bootstrap: Option<bool>,
}

pub fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("config file {} is not valid", path.display()))
}

pub fn resolve_postprocess(
    file: &ConfigFile,
    threshold: Option<f64>,
    connectivity: Option<u8>,
    min_area: Option<u64>,
) -> Result<PostprocessConfig> {
    let section = file.postprocess.as_ref();
    let mut cfg = PostprocessConfig::default();
    if let Some(t) = threshold.or(section.and_then(|s| s.binarize_threshold)) {
        cfg.binarize_threshold = t;
    }
    if let Some(c) = connectivity.or(section.and_then(|s| s.connectivity)) {
        cfg.connectivity = match c {
            4 => Connectivity::Four,
            8 => Connectivity::Eight,
            other => bail!("connectivity must be 4 or 8, got {other}"),
        };
    }
    if let Some(a) = min_area.or(section.and_then(|s| s.min_area_px)) {
        cfg.min_area_px = a;
    }
    cfg.validate().map_err(|e| anyhow!(e))?;
    Ok(cfg)
}

pub fn resolve_map(file: &ConfigFile) -> Result<MapConfig> {
    let mut cfg = MapConfig::default();
    if let Some(grid) = file.map.as_ref().and_then(|s| s.iou_thresholds.clone()) {
        cfg.iou_thresholds = grid;
    }
    cfg.validate().map_err(|e| anyhow!(e))?;
    Ok(cfg)
}

pub fn resolve_features(file: &ConfigFile, bins: Option<usize>) -> Result<FeatureConfig> {
    let section = file.features.as_ref();
    let mut cfg = FeatureConfig::default();
    if let Some(b) = bins.or(section.and_then(|s| s.bins)) {
        cfg.bins = b;
    }
    if let Some(n) = section.and_then(|s| s.normalize) {
        cfg.normalize = n;
    }
    if let Some(ranges) = section.and_then(|s| s.ranges.as_ref()) {
        if ranges.len() != FEATURE_COUNT {
            bail!(
                "features.ranges must list exactly {FEATURE_COUNT} [lo, hi] pairs, got {}",
                ranges.len()
            );
        }
        for (slot, pair) in cfg.ranges.iter_mut().zip(ranges) {
            *slot = (pair[0], pair[1]);
        }
    }
    cfg.validate().map_err(|e| anyhow!(e))?;
    Ok(cfg)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ForestFlags {
    pub trees: Option<usize>,
    pub max_depth: Option<u32>,
    pub min_samples_split: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub features_per_split: Option<usize>,
    pub no_bootstrap: bool,
}

pub fn resolve_forest(file: &ConfigFile, flags: &ForestFlags, seed: u64) -> Result<ForestParams> {
    let section = file.forest.as_ref();
    let mut params = ForestParams {
        seed,
        ..Default::default()
    };
    if let Some(n) = flags.trees.or(section.and_then(|s| s.n_trees)) {
        params.n_trees = n;
    }
    if let Some(d) = flags.max_depth.or(section.and_then(|s| s.max_depth)) {
        params.max_depth = Some(d);
    }
    if let Some(m) = flags
        .min_samples_split
        .or(section.and_then(|s| s.min_samples_split))
    {
        params.min_samples_split = m;
    }
    if let Some(m) = flags
        .min_samples_leaf
        .or(section.and_then(|s| s.min_samples_leaf))
    {
        params.min_samples_leaf = m;
    }
    if let Some(m) = flags
        .features_per_split
        .or(section.and_then(|s| s.features_per_split))
    {
        params.features_per_split = Some(m);
    }
    if flags.no_bootstrap {
        params.bootstrap = false;
    } else if let Some(b) = section.and_then(|s| s.bootstrap) {
        params.bootstrap = b;
    }
    params.validate().map_err(|e| anyhow!(e))?;
    Ok(params)
}

/// Parses `threshold:<value>` or `budget:<count>`.
pub fn parse_policy(spec: &str) -> Result<Policy> {
    let (kind, value) = spec.split_once(':').ok_or_else(|| {
        anyhow!("policy must be threshold:<value> or budget:<count>, got {spec:?}")
    })?;
    match kind {
        "threshold" => {
            let tau: f64 = value
                .parse()
                .map_err(|_| anyhow!("threshold value {value:?} is not a number"))?;
            Ok(Policy::Threshold(tau))
        }
        "budget" => {
            let k: usize = value
                .parse()
                .map_err(|_| anyhow!("budget value {value:?} is not a count"))?;
            Ok(Policy::Budget(k))
        }
        other => bail!("unknown policy kind {other:?} (use threshold: or budget:)"),
    }
}

pub fn parse_sim_estimator(name: &str) -> Result<SimEstimator> {
    match name {
        "random" => Ok(SimEstimator::Random),
        "oracle" => Ok(SimEstimator::Oracle),
        "pce" => Ok(SimEstimator::Pce),
        "dap" => Ok(SimEstimator::Dap),
        "dov" => Ok(SimEstimator::Dov),
        other => bail!("unknown estimator {other:?} (use random|oracle|pce|dap|dov)"),
    }
}

/// Plain decimal, returned as scaled integer plus decimal places.
fn parse_decimal(s: &str) -> Result<(i128, u32)> {
    let err = || anyhow!("grid component {s:?} is not a plain decimal number");
    let (sign, digits) = match s.strip_prefix('-') {
        Some(rest) => (-1i128, rest),
        None => (1i128, s),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
        || frac_part.len() > 12
    {
        return Err(err());
    }
    let mut value: i128 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| err())?
    };
    for c in frac_part.chars() {
        value = value * 10 + i128::from(c.to_digit(10).unwrap());
    }
    Ok((sign * value, frac_part.len() as u32))
}

/// Parses a `start:end:step` sweep. Values are computed as exact scaled
/// integers divided once, so `0:1:0.05` yields the same floats every run
/// with no accumulation drift; descending sweeps (`10:0:-1`) are allowed.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be start:end:step, got {spec:?}");
    }
    let (s_num, s_dec) = parse_decimal(parts[0])?;
    let (e_num, e_dec) = parse_decimal(parts[1])?;
    let (d_num, d_dec) = parse_decimal(parts[2])?;
    let decimals = s_dec.max(e_dec).max(d_dec);
    let scale = |num: i128, dec: u32| num * 10i128.pow(decimals - dec);
    let start = scale(s_num, s_dec);
    let end = scale(e_num, e_dec);
    let step = scale(d_num, d_dec);
    if step == 0 {
        bail!("grid step must be non-zero");
    }
    if (end - start).signum() != 0 && (end - start).signum() != step.signum() {
        bail!("grid step direction does not reach the end value");
    }
    let denom = 10f64.powi(decimals as i32);
    let mut values = Vec::new();
    let mut current = start;
    loop {
        values.push(current as f64 / denom);
        current += step;
        let passed = if step > 0 {
            current > end
        } else {
            current < end
        };
        if passed {
            break;
        }
        if values.len() > 100_000 {
            bail!("grid has more than 100000 points");
        }
    }
    Ok(values)
}

// --- al-simulate specification file ---------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpecFile {
    pub corpus: Option<CorpusSection>,
    pub detector: Option<DetectorSection>,
    pub estimator: Option<String>,
    pub policy: Option<String>,
    pub iterations: Option<usize>,
    pub ensemble_size: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub n_pool: Option<usize>,
    pub n_test: Option<usize>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub min_objects: Option<usize>,
    pub max_objects: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
    pub kappa: Option<f64>,
    pub difficulty_min: Option<f64>,
    pub difficulty_max: Option<f64>,
    pub mixture: Option<MixtureSection>,
    pub dropout_noise_scale: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSection {
    pub jitter: Option<f64>,
    pub fragmentation: Option<f64>,
    pub miss: Option<f64>,
    pub spurious: Option<f64>,
}

pub fn load_simulation_spec(path: Option<&Path>) -> Result<SimulationSpecFile> {
    let Some(path) = path else {
        return Ok(SimulationSpecFile::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read simulation spec {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("simulation spec {} is not valid", path.display()))
}

pub fn resolve_corpus(section: Option<&CorpusSection>) -> CorpusParams {
    let mut params = CorpusParams::default();
    if let Some(s) = section {
        if let Some(v) = s.n_pool {
            params.n_pool = v;
        }
        if let Some(v) = s.n_test {
            params.n_test = v;
        }
        if let Some(v) = s.height {
            params.height = v;
        }
        if let Some(v) = s.width {
            params.width = v;
        }
        if let Some(v) = s.min_objects {
            params.min_objects = v;
        }
        if let Some(v) = s.max_objects {
            params.max_objects = v;
        }
        if let Some(v) = s.seed {
            params.seed = v;
        }
    }
    params
}

pub fn resolve_detector(section: Option<&DetectorSection>) -> SyntheticDetectorConfig {
    let mut cfg = SyntheticDetectorConfig::default();
    if let Some(s) = section {
        if let Some(v) = s.q_min {
            cfg.q_min = v;
        }
        if let Some(v) = s.q_max {
            cfg.q_max = v;
        }
        if let Some(v) = s.kappa {
            cfg.kappa = v;
        }
        if let Some(v) = s.difficulty_min {
            cfg.difficulty_min = v;
        }
        if let Some(v) = s.difficulty_max {
            cfg.difficulty_max = v;
        }
        if let Some(m) = &s.mixture {
            cfg.mixture = ErrorMixture {
                jitter: m.jitter.unwrap_or(cfg.mixture.jitter),
                fragmentation: m.fragmentation.unwrap_or(cfg.mixture.fragmentation),
                miss: m.miss.unwrap_or(cfg.mixture.miss),
                spurious: m.spurious.unwrap_or(cfg.mixture.spurious),
            };
        }
        if let Some(v) = s.dropout_noise_scale {
            cfg.dropout_noise_scale = v;
        }
        if let Some(v) = s.seed {
            cfg.seed = v;
        }
    }
    cfg
}
