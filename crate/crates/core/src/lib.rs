//! Detector-agnostic toolkit for turning document object-detection outputs
//! into objects and deciding how much to trust them.
//!
//! The pipeline starts from a per-pixel probability map produced by any
//! segmentation-style detector. [`postprocess`] converts such a map into a
//! [`postprocess::Prediction`] (connected components, small-object filter,
//! contour polygons). [`metrics`] scores a prediction against a reference
//! (pixel IoU and PASCAL-VOC-style mAP over an IoU-threshold grid).
//!
//! On top of that sit four confidence estimators:
//!
//! * [`estimators::pce`] — mean of the per-object mean probabilities,
//! * [`estimators::dap`] — mean pairwise mAP across a dropout ensemble,
//! * [`estimators::dov`] — variance of per-member object counts,
//! * [`forest`] — a random-forest regressor predicting per-image mAP from
//!   the 8×B object-statistics histograms of [`features`].
//!
//! [`evaluation`] builds reject curves with bootstrap percentile bands, and
//! [`active_learning`] ranks images for annotation and simulates the
//! annotate-lowest-confidence loop against a synthetic detector.
//!
//! The crate is `no_std`-compatible (requires `alloc`); all randomized
//! routines take explicit seeds and derive per-unit streams through [`rng`],
//! so results are bit-identical across platforms and thread schedules.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod active_learning;
pub mod estimators;
pub mod evaluation;
pub mod features;
pub mod forest;
pub mod geometry;
pub mod metrics;
pub mod postprocess;
pub mod rng;

pub use estimators::{ConfidenceScore, DropoutEnsemble, EstimatorKind};
pub use geometry::{BinaryMask, Point, Polygon, Rect};
pub use metrics::{GroundTruth, ImageScore, MapConfig};
pub use postprocess::{DetectedObject, PostprocessConfig, Prediction, ProbabilityMap};
