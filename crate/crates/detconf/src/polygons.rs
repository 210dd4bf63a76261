//! JSON polygon documents for predictions and ground truth.
//!
//! ```json
//! {
//!   "image_id": "page-0001",
//!   "height": 64,
//!   "width": 64,
//!   "objects": [
//!     {"polygon": [[10.0, 12.0], [40.0, 12.0], [40.0, 30.0], [10.0, 30.0]],
//!      "mean_prob": 0.93}
//!   ]
//! }
//! ```
//!
//! `mean_prob` is optional (ground truth has none; a prediction without it
//! defaults to 1.0). Coordinates round-trip losslessly. Schema violations
//! are reported with a `$.field[index]` path.

use std::path::{Path, PathBuf};

use detconf_core::geometry::{GeometryError, Point, Polygon};
use detconf_core::metrics::GroundTruth;
use detconf_core::postprocess::{DetectedObject, Prediction};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct PolyObject {
    pub polygon: Vec<(f64, f64)>,
    pub mean_prob: Option<f64>,
}

/// Parsed polygon document, not yet interpreted as prediction or truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonDoc {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub objects: Vec<PolyObject>,
}

#[derive(Debug, Error)]
pub enum PolygonFileError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: not valid JSON: {message}")]
    Json { path: PathBuf, message: String },
    #[error("{path}: schema error at {at}: {reason}")]
    Schema {
        path: PathBuf,
        at: String,
        reason: String,
    },
    #[error("{path}: object {index} has invalid geometry: {source}")]
    Geometry {
        path: PathBuf,
        index: usize,
        source: GeometryError,
    },
}

fn want<'v>(
    path: &Path,
    value: &'v Value,
    at: &str,
    what: &str,
) -> Result<&'v Value, PolygonFileError> {
    if value.is_null() {
        return Err(PolygonFileError::Schema {
            path: path.to_path_buf(),
            at: at.to_string(),
            reason: format!("missing, expected {what}"),
        });
    }
    Ok(value)
}

fn as_usize(path: &Path, value: &Value, at: &str) -> Result<usize, PolygonFileError> {
    want(path, value, at, "a positive integer")?
        .as_u64()
        .filter(|&v| v >= 1)
        .map(|v| v as usize)
        .ok_or_else(|| PolygonFileError::Schema {
            path: path.to_path_buf(),
            at: at.to_string(),
            reason: "expected a positive integer".to_string(),
        })
}

fn as_finite(path: &Path, value: &Value, at: &str) -> Result<f64, PolygonFileError> {
    want(path, value, at, "a finite number")?
        .as_f64()
        .filter(|v| v.is_finite())
        .ok_or_else(|| PolygonFileError::Schema {
            path: path.to_path_buf(),
            at: at.to_string(),
            reason: "expected a finite number".to_string(),
        })
}

pub fn load_polygon_doc(path: &Path) -> Result<PolygonDoc, PolygonFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| PolygonFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let root: Value = serde_json::from_str(&text).map_err(|e| PolygonFileError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;

    let image_id = want(path, &root["image_id"], "$.image_id", "a string")?
        .as_str()
        .ok_or_else(|| PolygonFileError::Schema {
            path: path.to_path_buf(),
            at: "$.image_id".to_string(),
            reason: "expected a string".to_string(),
        })?
        .to_string();
    let height = as_usize(path, &root["height"], "$.height")?;
    let width = as_usize(path, &root["width"], "$.width")?;
    let objects_value = want(path, &root["objects"], "$.objects", "an array")?;
    let objects_array = objects_value
        .as_array()
        .ok_or_else(|| PolygonFileError::Schema {
            path: path.to_path_buf(),
            at: "$.objects".to_string(),
            reason: "expected an array".to_string(),
        })?;

    let mut objects = Vec::with_capacity(objects_array.len());
    for (i, obj) in objects_array.iter().enumerate() {
        let at_poly = format!("$.objects[{i}].polygon");
        let poly_value = want(path, &obj["polygon"], &at_poly, "an array of [x, y] pairs")?;
        let points = poly_value
            .as_array()
            .ok_or_else(|| PolygonFileError::Schema {
                path: path.to_path_buf(),
                at: at_poly.clone(),
                reason: "expected an array of [x, y] pairs".to_string(),
            })?;
        let mut polygon = Vec::with_capacity(points.len());
        for (j, pair) in points.iter().enumerate() {
            let pair_at = format!("{at_poly}[{j}]");
            let coords = pair.as_array().ok_or_else(|| PolygonFileError::Schema {
                path: path.to_path_buf(),
                at: pair_at.clone(),
                reason: "expected [x, y]".to_string(),
            })?;
            if coords.len() != 2 {
                return Err(PolygonFileError::Schema {
                    path: path.to_path_buf(),
                    at: pair_at,
                    reason: format!("expected 2 coordinates, got {}", coords.len()),
                });
            }
            let x = as_finite(path, &coords[0], &format!("{pair_at}[0]"))?;
            let y = as_finite(path, &coords[1], &format!("{pair_at}[1]"))?;
            polygon.push((x, y));
        }
        let mean_prob = match &obj["mean_prob"] {
            Value::Null => None,
            v => {
                let at = format!("$.objects[{i}].mean_prob");
                let p = as_finite(path, v, &at)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(PolygonFileError::Schema {
                        path: path.to_path_buf(),
                        at,
                        reason: format!("probability {p} outside [0, 1]"),
                    });
                }
                Some(p)
            }
        };
        objects.push(PolyObject { polygon, mean_prob });
    }
    Ok(PolygonDoc {
        image_id,
        height,
        width,
        objects,
    })
}

#[derive(Serialize)]
struct DocOut<'a> {
    image_id: &'a str,
    height: usize,
    width: usize,
    objects: Vec<ObjOut>,
}

#[derive(Serialize)]
struct ObjOut {
    polygon: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_prob: Option<f64>,
}

fn save_doc(path: &Path, doc: DocOut<'_>) -> Result<(), PolygonFileError> {
    let mut text = serde_json::to_string_pretty(&doc).expect("document serialization");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| PolygonFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_prediction(path: &Path, pred: &Prediction) -> Result<(), PolygonFileError> {
    save_doc(
        path,
        DocOut {
            image_id: &pred.image_id,
            height: pred.height,
            width: pred.width,
            objects: pred
                .objects
                .iter()
                .map(|o| ObjOut {
                    polygon: o.polygon.vertices().iter().map(|v| [v.x, v.y]).collect(),
                    mean_prob: Some(o.mean_prob),
                })
                .collect(),
        },
    )
}

pub fn save_ground_truth(path: &Path, gt: &GroundTruth) -> Result<(), PolygonFileError> {
    save_doc(
        path,
        DocOut {
            image_id: &gt.image_id,
            height: gt.height,
            width: gt.width,
            objects: gt
                .polygons
                .iter()
                .map(|p| ObjOut {
                    polygon: p.vertices().iter().map(|v| [v.x, v.y]).collect(),
                    mean_prob: None,
                })
                .collect(),
        },
    )
}

fn build_polygon(
    file: &Path,
    index: usize,
    points: &[(f64, f64)],
) -> Result<Polygon, PolygonFileError> {
    Polygon::new(points.iter().map(|&(x, y)| Point::new(x, y)).collect()).map_err(|source| {
        PolygonFileError::Geometry {
            path: file.to_path_buf(),
            index,
            source,
        }
    })
}

/// Interprets a document as a prediction: bounding boxes and pixel areas
/// are recomputed from the polygons; a missing `mean_prob` defaults to 1.0.
pub fn doc_to_prediction(file: &Path, doc: &PolygonDoc) -> Result<Prediction, PolygonFileError> {
    let mut objects = Vec::with_capacity(doc.objects.len());
    for (i, obj) in doc.objects.iter().enumerate() {
        let polygon = build_polygon(file, i, &obj.polygon)?;
        let bbox = polygon.bounding_rect();
        let pixel_area = polygon
            .rasterize(doc.height, doc.width)
            .map_err(|source| PolygonFileError::Geometry {
                path: file.to_path_buf(),
                index: i,
                source,
            })?
            .count_set();
        objects.push(DetectedObject {
            polygon,
            bbox,
            pixel_area,
            mean_prob: obj.mean_prob.unwrap_or(1.0),
        });
    }
    Ok(Prediction {
        image_id: doc.image_id.clone(),
        height: doc.height,
        width: doc.width,
        objects,
    })
}

pub fn doc_to_ground_truth(file: &Path, doc: &PolygonDoc) -> Result<GroundTruth, PolygonFileError> {
    let mut polygons = Vec::with_capacity(doc.objects.len());
    for (i, obj) in doc.objects.iter().enumerate() {
        polygons.push(build_polygon(file, i, &obj.polygon)?);
    }
    Ok(GroundTruth {
        image_id: doc.image_id.clone(),
        height: doc.height,
        width: doc.width,
        polygons,
    })
}
