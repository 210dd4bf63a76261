//! Turns a detector probability map into a set of detected objects.
//!
//! The stages mirror common segmentation post-processing: per-pixel class
//! assignment (two-class argmax, i.e. threshold at 0.5 by default),
//! connected-component grouping, removal of components below a pixel-area
//! threshold, then per-object contour polygon, bounding box and mean
//! probability extraction.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{BinaryMask, Point, Polygon, Rect};

/// Per-pixel object-class probability grid for one image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

/// Errors from probability-map construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbabilityMapError {
    #[error("expected {expected} values for a {height}x{width} map, got {got}")]
    LengthMismatch {
        height: usize,
        width: usize,
        expected: usize,
        got: usize,
    },
    #[error("probability at index {index} is {value}, outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("map dimensions must be at least 1x1, got {height}x{width}")]
    EmptyMap { height: usize, width: usize },
}

impl ProbabilityMap {
    /// Validates that `values` has `height * width` entries, all in `[0, 1]`.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self, ProbabilityMapError> {
        if height == 0 || width == 0 {
            return Err(ProbabilityMapError::EmptyMap { height, width });
        }
        if values.len() != height * width {
            return Err(ProbabilityMapError::LengthMismatch {
                height,
                width,
                expected: height * width,
                got: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ProbabilityMapError::ValueOutOfRange { index, value });
            }
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Pixel connectivity for component grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Post-processing knobs. Defaults: threshold 0.5 (two-class argmax with
/// ties going to the object class), 8-connectivity, minimum object area 50
/// pixels with components strictly below the threshold removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessConfig {
    pub binarize_threshold: f64,
    pub connectivity: Connectivity,
    pub min_area_px: u64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            binarize_threshold: 0.5,
            connectivity: Connectivity::Eight,
            min_area_px: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PostprocessConfigError {
    #[error("binarize threshold must lie strictly inside (0, 1), got {0}")]
    ThresholdOutOfRange(f64),
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<(), PostprocessConfigError> {
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(PostprocessConfigError::ThresholdOutOfRange(
                self.binarize_threshold,
            ));
        }
        Ok(())
    }
}

/// One detected object: outer contour, bounding box, pixel count of its
/// component and the mean probability over the component's pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedObject {
    pub polygon: Polygon,
    pub bbox: Rect,
    pub pixel_area: u64,
    pub mean_prob: f64,
}

/// All objects extracted from one image, in deterministic order (by the
/// component's top-left-most pixel, row-major). May be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub objects: Vec<DetectedObject>,
}

impl Prediction {
    /// Number of detected objects, the `n_i` of the object-variance score.
    pub fn object_count(&self) -> usize {
        self.objects.len()
    }
}

/// Pixel set iff its probability is `>= binarize_threshold`, so a two-class
/// argmax with the 0.5 tie going to the object class.
pub fn binarize(map: &ProbabilityMap, cfg: &PostprocessConfig) -> BinaryMask {
    let mut mask = BinaryMask::new(map.height(), map.width());
    for y in 0..map.height() {
        for x in 0..map.width() {
            if map.get(x, y) >= cfg.binarize_threshold {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Partitions set pixels into maximal connected components.
///
/// Components are ordered by their first pixel in row-major order, and each
/// component's pixel list `(x, y)` is itself sorted row-major.
pub fn connected_components(
    mask: &BinaryMask,
    connectivity: Connectivity,
) -> Vec<Vec<(usize, usize)>> {
    let (height, width) = (mask.height(), mask.width());
    let mut visited = vec![false; height * width];
    let mut components = Vec::new();
    let deltas: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ],
    };

    let mut stack = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let idx = y * width + x;
            if !mask.get(x, y) || visited[idx] {
                continue;
            }
            visited[idx] = true;
            stack.push((x, y));
            let mut pixels = Vec::new();
            while let Some((cx, cy)) = stack.pop() {
                pixels.push((cx, cy));
                for &(dx, dy) in deltas {
                    let nx = cx as i64 + dx;
                    let ny = cy as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    let nidx = ny * width + nx;
                    if mask.get(nx, ny) && !visited[nidx] {
                        visited[nidx] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            pixels.sort_unstable_by_key(|&(px, py)| (py, px));
            components.push(pixels);
        }
    }
    components
}

/// Full extraction: binarize, group, drop components with
/// `pixel_area < min_area_px`, then build one [`DetectedObject`] per
/// survivor. An empty [`Prediction`] is a valid output.
pub fn extract_objects(
    image_id: &str,
    map: &ProbabilityMap,
    cfg: &PostprocessConfig,
) -> Prediction {
    let mask = binarize(map, cfg);
    let components = connected_components(&mask, cfg.connectivity);
    let mut objects = Vec::new();
    for pixels in components {
        let pixel_area = pixels.len() as u64;
        if pixel_area < cfg.min_area_px {
            continue;
        }
        let mut prob_sum = 0.0;
        for &(x, y) in &pixels {
            prob_sum += map.get(x, y);
        }
        let polygon = outer_contour(&pixels);
        let bbox = polygon.bounding_rect();
        objects.push(DetectedObject {
            polygon,
            bbox,
            pixel_area,
            mean_prob: prob_sum / pixel_area as f64,
        });
    }
    Prediction {
        image_id: String::from(image_id),
        height: map.height(),
        width: map.width(),
        objects,
    }
}

/// Moore-neighborhood ring, clockwise in image coordinates starting west.
const RING: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

/// Moore border following over a component's pixel set: outer border only,
/// holes ignored. Vertices are pixel centers in trace order.
///
/// One- and two-pixel components have fewer than three distinct border
/// pixels; their rings are padded with edge midpoints (half-pixel
/// coordinates) so the result is always a valid polygon that rasterizes
/// back to exactly the component.
pub(crate) fn outer_contour(pixels: &[(usize, usize)]) -> Polygon {
    debug_assert!(!pixels.is_empty());
    let start = pixels[0]; // top-left-most: pixels are sorted row-major

    if pixels.len() == 1 {
        let (x, y) = (start.0 as f64, start.1 as f64);
        return Polygon::new(vec![
            Point::new(x, y),
            Point::new(x + 0.5, y),
            Point::new(x, y + 0.5),
        ])
        .expect("synthesized single-pixel contour is valid");
    }

    // Local membership grid over the component's bounding box.
    let x_min = pixels.iter().map(|p| p.0).min().unwrap();
    let y_min = start.1;
    let x_max = pixels.iter().map(|p| p.0).max().unwrap();
    let y_max = pixels.iter().map(|p| p.1).max().unwrap();
    let (lw, lh) = (x_max - x_min + 1, y_max - y_min + 1);
    let mut member = vec![false; lw * lh];
    for &(x, y) in pixels {
        member[(y - y_min) * lw + (x - x_min)] = true;
    }
    let in_component = |x: i64, y: i64| -> bool {
        if x < x_min as i64 || y < y_min as i64 || x > x_max as i64 || y > y_max as i64 {
            return false;
        }
        member[(y as usize - y_min) * lw + (x as usize - x_min)]
    };

    let start = (start.0 as i64, start.1 as i64);
    // West of the top-left-most pixel is guaranteed background.
    let start_back = (start.0 - 1, start.1);
    // The walk is a deterministic map on (pixel, backtrack) states, so it
    // must enter a cycle; that cycle is the outer contour traversed once.
    // States before the first repeat that are not part of the cycle are an
    // artifact of the synthetic initial backtrack and are dropped.
    type TraceState = ((i64, i64), (i64, i64));
    let mut path: Vec<TraceState> = Vec::new();
    let mut seen: alloc::collections::BTreeMap<TraceState, usize> =
        alloc::collections::BTreeMap::new();
    let mut current = start;
    let mut back = start_back;
    let cycle_start = loop {
        match seen.entry((current, back)) {
            alloc::collections::btree_map::Entry::Occupied(hit) => break *hit.get(),
            alloc::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(path.len());
            }
        }
        path.push((current, back));

        let back_dir = RING
            .iter()
            .position(|&(dx, dy)| (current.0 + dx, current.1 + dy) == back)
            .expect("backtrack pixel neighbors current");
        let mut found = None;
        for step in 1..=8 {
            let dir = (back_dir + step) % 8;
            let cand = (current.0 + RING[dir].0, current.1 + RING[dir].1);
            if in_component(cand.0, cand.1) {
                let prev_dir = (dir + 7) % 8;
                let new_back = if step == 1 {
                    back
                } else {
                    (current.0 + RING[prev_dir].0, current.1 + RING[prev_dir].1)
                };
                found = Some((cand, new_back));
                break;
            }
        }
        let (next, new_back) = found.expect("multi-pixel component has a connected neighbor");
        current = next;
        back = new_back;
    };
    let ring: Vec<(i64, i64)> = path[cycle_start..].iter().map(|s| s.0).collect();

    if ring.len() >= 3 {
        let vertices = ring
            .into_iter()
            .map(|(x, y)| Point::new(x as f64, y as f64))
            .collect();
        Polygon::new(vertices).expect("traced ring is a valid polygon")
    } else {
        // Two border pixels: pad with the midpoint so the ring closes.
        let a = Point::new(ring[0].0 as f64, ring[0].1 as f64);
        let b = Point::new(ring[1].0 as f64, ring[1].1 as f64);
        let mid = Point::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
        Polygon::new(vec![a, mid, b]).expect("padded two-pixel contour is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_from(height: usize, width: usize, values: &[f64]) -> ProbabilityMap {
        ProbabilityMap::new(height, width, values.to_vec()).unwrap()
    }

    fn uniform_square_map(side: usize, pad: usize, prob: f64) -> ProbabilityMap {
        let dim = side + 2 * pad;
        let mut values = vec![0.0; dim * dim];
        for y in pad..pad + side {
            for x in pad..pad + side {
                values[y * dim + x] = prob;
            }
        }
        ProbabilityMap::new(dim, dim, values).unwrap()
    }

    #[test]
    fn map_rejects_out_of_range() {
        let err = ProbabilityMap::new(1, 2, vec![0.5, 1.5]).unwrap_err();
        assert!(matches!(
            err,
            ProbabilityMapError::ValueOutOfRange { index: 1, .. }
        ));
    }

    #[test]
    fn binarize_all_zero_map_is_empty() {
        let map = map_from(2, 2, &[0.0; 4]);
        let mask = binarize(&map, &PostprocessConfig::default());
        assert_eq!(mask.count_set(), 0);
    }

    #[test]
    fn binarize_tie_at_half_is_object() {
        let map = map_from(1, 3, &[0.4, 0.5, 0.49]);
        let mask = binarize(&map, &PostprocessConfig::default());
        assert!(!mask.get(0, 0));
        assert!(mask.get(1, 0));
        assert!(!mask.get(2, 0));
    }

    #[test]
    fn binarize_checkerboard() {
        let map = map_from(2, 2, &[0.4, 0.6, 0.6, 0.4]);
        let mask = binarize(&map, &PostprocessConfig::default());
        assert!(!mask.get(0, 0) && mask.get(1, 0) && mask.get(0, 1) && !mask.get(1, 1));
    }

    #[test]
    fn diagonal_pair_connectivity() {
        let mut mask = BinaryMask::new(2, 2);
        mask.set(0, 0, true);
        mask.set(1, 1, true);
        assert_eq!(connected_components(&mask, Connectivity::Eight).len(), 1);
        assert_eq!(connected_components(&mask, Connectivity::Four).len(), 2);
    }

    #[test]
    fn isolated_pixels_are_separate_components() {
        let mut mask = BinaryMask::new(5, 9);
        for i in 0..5 {
            mask.set(i * 2, i, true);
        }
        assert_eq!(connected_components(&mask, Connectivity::Eight).len(), 5);
    }

    #[test]
    fn component_order_is_row_major_by_first_pixel() {
        let mut mask = BinaryMask::new(4, 4);
        mask.set(3, 0, true);
        mask.set(0, 2, true);
        let comps = connected_components(&mask, Connectivity::Eight);
        assert_eq!(comps[0], vec![(3, 0)]);
        assert_eq!(comps[1], vec![(0, 2)]);
    }

    #[test]
    fn area_filter_strictly_less_than() {
        // 7x7 = 49 pixels: removed under the default 50-pixel threshold.
        let removed = extract_objects("a", &uniform_square_map(7, 1, 0.9), &Default::default());
        assert!(removed.objects.is_empty());
        // Exactly 50 pixels (10x5): retained.
        let mut values = vec![0.0; 12 * 12];
        for y in 1..6 {
            for x in 1..11 {
                values[y * 12 + x] = 0.9;
            }
        }
        let map = ProbabilityMap::new(12, 12, values).unwrap();
        let kept = extract_objects("b", &map, &Default::default());
        assert_eq!(kept.objects.len(), 1);
        assert_eq!(kept.objects[0].pixel_area, 50);
    }

    #[test]
    fn solid_square_extraction() {
        let map = uniform_square_map(10, 2, 0.8);
        let pred = extract_objects("img", &map, &PostprocessConfig::default());
        assert_eq!(pred.objects.len(), 1);
        let obj = &pred.objects[0];
        assert_eq!(obj.pixel_area, 100);
        assert!((obj.mean_prob - 0.8).abs() < 1e-12);
        assert_eq!(obj.bbox, Rect::new(2, 2, 11, 11).unwrap());
        assert_eq!(obj.bbox, obj.polygon.bounding_rect());
    }

    #[test]
    fn every_member_pixel_meets_threshold() {
        let map = map_from(
            3,
            4,
            &[0.2, 0.6, 0.7, 0.1, 0.5, 0.9, 0.55, 0.0, 0.3, 0.8, 0.6, 0.4],
        );
        let cfg = PostprocessConfig {
            min_area_px: 0,
            ..Default::default()
        };
        let mask = binarize(&map, &cfg);
        for comp in connected_components(&mask, cfg.connectivity) {
            for (x, y) in comp {
                assert!(map.get(x, y) >= cfg.binarize_threshold);
            }
        }
    }

    #[test]
    fn contour_of_rectangle_rasterizes_back_exactly() {
        let mut values = vec![0.0; 8 * 8];
        for y in 2..6 {
            for x in 1..7 {
                values[y * 8 + x] = 1.0;
            }
        }
        let map = ProbabilityMap::new(8, 8, values).unwrap();
        let cfg = PostprocessConfig {
            min_area_px: 0,
            ..Default::default()
        };
        let pred = extract_objects("r", &map, &cfg);
        assert_eq!(pred.objects.len(), 1);
        let obj = &pred.objects[0];
        let remask = obj.polygon.rasterize(8, 8).unwrap();
        assert_eq!(remask.count_set(), obj.pixel_area);
    }

    #[test]
    fn tiny_components_get_valid_polygons() {
        let mut values = vec![0.0; 6 * 6];
        values[0] = 1.0; // isolated pixel at (0,0)
        values[3 * 6 + 2] = 1.0; // horizontal pair at (2,3)-(3,3)
        values[3 * 6 + 3] = 1.0;
        let map = ProbabilityMap::new(6, 6, values).unwrap();
        let cfg = PostprocessConfig {
            min_area_px: 0,
            ..Default::default()
        };
        let pred = extract_objects("t", &map, &cfg);
        assert_eq!(pred.objects.len(), 2);
        assert_eq!(pred.objects[0].pixel_area, 1);
        assert_eq!(
            pred.objects[0].polygon.rasterize(6, 6).unwrap().count_set(),
            1
        );
        assert_eq!(pred.objects[1].pixel_area, 2);
        assert_eq!(
            pred.objects[1].polygon.rasterize(6, 6).unwrap().count_set(),
            2
        );
    }

    #[test]
    fn pixel_accounting_is_total() {
        let map = map_from(
            3,
            5,
            &[
                0.9, 0.9, 0.0, 0.8, 0.0, //
                0.9, 0.0, 0.0, 0.8, 0.0, //
                0.0, 0.0, 0.7, 0.0, 0.2,
            ],
        );
        let cfg = PostprocessConfig {
            min_area_px: 2,
            ..Default::default()
        };
        let mask = binarize(&map, &cfg);
        let comps = connected_components(&mask, cfg.connectivity);
        let pred = extract_objects("acc", &map, &cfg);
        let kept: u64 = pred.objects.iter().map(|o| o.pixel_area).sum();
        let filtered: u64 = comps
            .iter()
            .map(|c| c.len() as u64)
            .filter(|&n| n < cfg.min_area_px)
            .sum();
        let background = (3 * 5) as u64 - mask.count_set();
        assert_eq!(kept + filtered + background, 15);
    }

    #[test]
    fn invalid_threshold_rejected() {
        let cfg = PostprocessConfig {
            binarize_threshold: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(PostprocessConfig::default().validate().is_ok());
    }
}
