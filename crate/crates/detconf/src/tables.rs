//! CSV files with `#` comment headers.
//!
//! All tabular outputs use the same shape: comment lines (tool version,
//! command, config digest, seed), one header row, then data rows. Image ids
//! are restricted by manifest validation to `[A-Za-z0-9._-]`, so no quoting
//! is ever needed and files are byte-reproducible. Floats are written with
//! Rust's shortest-round-trip formatting and parse back to the exact value.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use detconf_core::estimators::{ConfidenceScore, EstimatorKind};
use detconf_core::features::{FeatureConfig, FeatureVector, FEATURE_COUNT};
use detconf_core::metrics::ImageScore;
use thiserror::Error;

use crate::header::Header;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: missing required column {column:?} (header: {header:?})")]
    MissingColumn {
        path: PathBuf,
        column: &'static str,
        header: String,
    },
    #[error("{path}: file has no data rows")]
    Empty { path: PathBuf },
}

/// Raw CSV contents: comment lines (without the `# ` prefix), the header
/// cells and the data rows.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_csv(path: &Path) -> Result<CsvTable, TableError> {
    let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut comments = Vec::new();
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            comments.push(comment.trim_start().to_string());
            continue;
        }
        let cells: Vec<String> = line.split(',').map(str::to_string).collect();
        match &header {
            None => header = Some(cells),
            Some(h) => {
                if cells.len() != h.len() {
                    return Err(TableError::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        reason: format!("expected {} cells, got {}", h.len(), cells.len()),
                    });
                }
                rows.push(cells);
            }
        }
    }
    let header = header.ok_or_else(|| TableError::Empty {
        path: path.to_path_buf(),
    })?;
    Ok(CsvTable {
        comments,
        header,
        rows,
    })
}

impl CsvTable {
    pub fn column(&self, path: &Path, name: &'static str) -> Result<usize, TableError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TableError::MissingColumn {
                path: path.to_path_buf(),
                column: name,
                header: self.header.join(","),
            })
    }

    pub fn parse_f64(&self, path: &Path, row: usize, col: usize) -> Result<f64, TableError> {
        self.rows[row][col]
            .parse::<f64>()
            .map_err(|_| TableError::Parse {
                path: path.to_path_buf(),
                line: row + 1,
                reason: format!("not a number: {:?}", self.rows[row][col]),
            })
    }
}

/// Renders a CSV with its comment block; the written string is the file.
pub fn render_csv(header: &Header, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for line in header.render() {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "{}", columns.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), TableError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| TableError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| TableError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest-round-trip float formatting (`Display`), shared by all writers.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

// --- typed readers -------------------------------------------------------

pub fn parse_estimator(name: &str) -> Option<EstimatorKind> {
    match name {
        "pce" => Some(EstimatorKind::Pce),
        "dap" => Some(EstimatorKind::Dap),
        "dov" => Some(EstimatorKind::Dov),
        "map-rfr" => Some(EstimatorKind::MapRfr),
        _ => None,
    }
}

/// Reads a confidence CSV (`image_id,estimator,value,...`).
pub fn read_confidence_csv(path: &Path) -> Result<Vec<ConfidenceScore>, TableError> {
    let table = read_csv(path)?;
    let id_col = table.column(path, "image_id")?;
    let est_col = table.column(path, "estimator")?;
    let value_col = table.column(path, "value")?;
    let mut scores = Vec::with_capacity(table.rows.len());
    for r in 0..table.rows.len() {
        let estimator =
            parse_estimator(&table.rows[r][est_col]).ok_or_else(|| TableError::Parse {
                path: path.to_path_buf(),
                line: r + 1,
                reason: format!("unknown estimator {:?}", table.rows[r][est_col]),
            })?;
        scores.push(ConfidenceScore::new(
            table.rows[r][id_col].clone(),
            estimator,
            table.parse_f64(path, r, value_col)?,
        ));
    }
    if scores.is_empty() {
        return Err(TableError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(scores)
}

/// Reads a score CSV (`image_id,pixel_iou,map`).
pub fn read_image_scores_csv(path: &Path) -> Result<Vec<ImageScore>, TableError> {
    let table = read_csv(path)?;
    let id_col = table.column(path, "image_id")?;
    let iou_col = table.column(path, "pixel_iou")?;
    let map_col = table.column(path, "map")?;
    let mut scores = Vec::with_capacity(table.rows.len());
    for r in 0..table.rows.len() {
        scores.push(ImageScore {
            image_id: table.rows[r][id_col].clone(),
            pixel_iou: table.parse_f64(path, r, iou_col)?,
            map: table.parse_f64(path, r, map_col)?,
        });
    }
    if scores.is_empty() {
        return Err(TableError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(scores)
}

/// Reads regression targets: any CSV with `image_id` and `map` columns,
/// which covers both `targets.csv` and the `score` command's output.
pub fn read_targets_csv(path: &Path) -> Result<Vec<(String, f64)>, TableError> {
    let table = read_csv(path)?;
    let id_col = table.column(path, "image_id")?;
    let map_col = table.column(path, "map")?;
    let mut targets = Vec::with_capacity(table.rows.len());
    for r in 0..table.rows.len() {
        targets.push((
            table.rows[r][id_col].clone(),
            table.parse_f64(path, r, map_col)?,
        ));
    }
    if targets.is_empty() {
        return Err(TableError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(targets)
}

// --- feature CSV ----------------------------------------------------------

/// Comment line recording the binning configuration inside a feature CSV.
pub fn feature_config_comment(cfg: &FeatureConfig) -> String {
    let ranges = cfg
        .ranges
        .iter()
        .map(|(lo, hi)| format!("{lo}:{hi}"))
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "feature_config: bins={} normalize={} ranges={ranges} fingerprint={:016x}",
        cfg.bins,
        cfg.normalize,
        cfg.fingerprint()
    )
}

/// Recovers the configuration from [`feature_config_comment`] output.
pub fn parse_feature_config_comment(line: &str) -> Option<FeatureConfig> {
    let rest = line.strip_prefix("feature_config:")?.trim();
    let mut bins = None;
    let mut normalize = None;
    let mut ranges = None;
    let mut fingerprint = None;
    for token in rest.split_whitespace() {
        let (key, value) = token.split_once('=')?;
        match key {
            "bins" => bins = value.parse::<usize>().ok(),
            "normalize" => normalize = value.parse::<bool>().ok(),
            "ranges" => {
                let mut parsed = [(0.0, 0.0); FEATURE_COUNT];
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != FEATURE_COUNT {
                    return None;
                }
                for (slot, part) in parsed.iter_mut().zip(parts) {
                    let (lo, hi) = part.split_once(':')?;
                    *slot = (lo.parse().ok()?, hi.parse().ok()?);
                }
                ranges = Some(parsed);
            }
            "fingerprint" => fingerprint = u64::from_str_radix(value, 16).ok(),
            _ => {}
        }
    }
    let cfg = FeatureConfig {
        bins: bins?,
        ranges: ranges?,
        normalize: normalize?,
    };
    // The embedded fingerprint must agree with the parsed settings.
    if cfg.fingerprint() != fingerprint? {
        return None;
    }
    Some(cfg)
}

/// Reads a feature CSV back into vectors plus the configuration recorded in
/// its comments.
pub fn read_features_csv(path: &Path) -> Result<(FeatureConfig, Vec<FeatureVector>), TableError> {
    let table = read_csv(path)?;
    let cfg = table
        .comments
        .iter()
        .find_map(|c| parse_feature_config_comment(c))
        .ok_or_else(|| TableError::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: "no valid feature_config comment found".to_string(),
        })?;
    let id_col = table.column(path, "image_id")?;
    let expected = cfg.vector_len();
    if table.header.len() != expected + 1 {
        return Err(TableError::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!(
                "expected {} value columns for the recorded config, found {}",
                expected,
                table.header.len() - 1
            ),
        });
    }
    let mut vectors = Vec::with_capacity(table.rows.len());
    for r in 0..table.rows.len() {
        let mut values = Vec::with_capacity(expected);
        for c in 0..table.header.len() {
            if c == id_col {
                continue;
            }
            values.push(table.parse_f64(path, r, c)?);
        }
        vectors.push(FeatureVector {
            image_id: table.rows[r][id_col].clone(),
            values,
        });
    }
    if vectors.is_empty() {
        return Err(TableError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok((cfg, vectors))
}
