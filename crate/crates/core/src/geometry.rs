//! Geometric primitives shared by the whole toolkit: points, axis-aligned
//! pixel rectangles, polygons and binary masks.
//!
//! Conventions, used consistently by every module and file format:
//!
//! * origin at the top-left of the image, `x` is the column, `y` the row;
//! * pixel centers sit at integer coordinates, so pixel `(x, y)` is the
//!   sample at `(x as f64, y as f64)`;
//! * rectangles use integer-pixel semantics: `width = x_max - x_min + 1`;
//! * point-in-polygon is the even-odd rule with the boundary counting as
//!   inside, which makes rasterization deterministic.
//!
//! Two distinct notions of "area" coexist: the shoelace area of a contour
//! ([`Polygon::area`]) and the pixel count of a rasterized region
//! ([`BinaryMask::count_set`] / `pixel_area` on detected objects). Callers
//! pick whichever their formula needs; they agree only up to contour
//! discretization.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

/// Tolerance for "point lies on the polygon boundary" tests.
const BOUNDARY_EPS: f64 = 1e-9;

/// Errors from constructing or rasterizing geometric primitives.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    /// A polygon needs at least three vertices.
    #[error("polygon needs at least 3 vertices, got {0}")]
    DegeneratePolygon(usize),
    /// Two consecutive vertices (including the closing edge) coincide.
    #[error("polygon has consecutive duplicate vertices at index {0}")]
    DuplicateVertex(usize),
    /// A vertex coordinate is NaN or infinite.
    #[error("polygon vertex {0} is not finite")]
    NonFiniteVertex(usize),
    /// Rectangle bounds are inverted.
    #[error("invalid rect: x {x_min}..{x_max}, y {y_min}..{y_max}")]
    InvalidRect {
        x_min: i64,
        x_max: i64,
        y_min: i64,
        y_max: i64,
    },
    /// Raster target must be at least one pixel in each dimension.
    #[error("raster dimensions must be at least 1x1, got {height}x{width}")]
    EmptyRaster { height: usize, width: usize },
}

/// A point in image coordinates (`x` = column, `y` = row).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned rectangle with integer-pixel semantics: both corners are
/// included, so a rect degenerate to one pixel has width and height 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x_min: i64,
    pub y_min: i64,
    pub x_max: i64,
    pub y_max: i64,
}

impl Rect {
    pub fn new(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Result<Self, GeometryError> {
        if x_min > x_max || y_min > y_max {
            return Err(GeometryError::InvalidRect {
                x_min,
                x_max,
                y_min,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> u64 {
        (self.x_max - self.x_min + 1) as u64
    }

    pub fn height(&self) -> u64 {
        (self.y_max - self.y_min + 1) as u64
    }

    /// Pixel count covered by the rect.
    pub fn area(&self) -> u64 {
        self.width() * self.height()
    }

    /// Midpoint of the rect corners; halves are exact in f64.
    pub fn centroid(&self) -> Point {
        Point::new(
            (self.x_min + self.x_max) as f64 / 2.0,
            (self.y_min + self.y_max) as f64 / 2.0,
        )
    }

    /// Intersection with another rect, if any.
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        if x_min > x_max || y_min > y_max {
            None
        } else {
            Some(Rect {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        }
    }
}

/// A closed polygon ring. The last vertex implicitly connects back to the
/// first; it must not repeat it.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Validates vertex count, finiteness and the no-consecutive-duplicates
    /// invariant (including across the implicit closing edge).
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::DegeneratePolygon(vertices.len()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(GeometryError::NonFiniteVertex(i));
            }
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            if a.x == b.x && a.y == b.y {
                return Err(GeometryError::DuplicateVertex(i));
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Absolute shoelace area of the contour, orientation-independent.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            acc += a.x * b.y - b.x * a.y;
        }
        libm::fabs(acc) / 2.0
    }

    /// Tightest integer-pixel rect containing every vertex (mins floored,
    /// maxes ceiled).
    pub fn bounding_rect(&self) -> Rect {
        let mut x_min = f64::INFINITY;
        let mut y_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for v in &self.vertices {
            x_min = x_min.min(v.x);
            y_min = y_min.min(v.y);
            x_max = x_max.max(v.x);
            y_max = y_max.max(v.y);
        }
        Rect {
            x_min: libm::floor(x_min) as i64,
            y_min: libm::floor(y_min) as i64,
            x_max: libm::ceil(x_max) as i64,
            y_max: libm::ceil(y_max) as i64,
        }
    }

    /// Even-odd containment test with the boundary counting as inside.
    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            if on_segment(px, py, self.vertices[i], self.vertices[(i + 1) % n]) {
                return true;
            }
        }
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if (a.y > py) != (b.y > py) {
                let t = (py - a.y) / (b.y - a.y);
                let x = a.x + t * (b.x - a.x);
                if x > px {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Rasterizes the polygon onto a `height`×`width` grid: a pixel is set
    /// iff its center lies inside or on the boundary; out-of-bounds parts
    /// are clipped.
    ///
    /// Scanline even-odd fill plus an explicit boundary walk, equivalent to
    /// testing [`Polygon::contains_point`] at every pixel center.
    pub fn rasterize(&self, height: usize, width: usize) -> Result<BinaryMask, GeometryError> {
        if height == 0 || width == 0 {
            return Err(GeometryError::EmptyRaster { height, width });
        }
        let window = Rect {
            x_min: 0,
            y_min: 0,
            x_max: width as i64 - 1,
            y_max: height as i64 - 1,
        };
        Ok(self.rasterize_window(&window))
    }

    /// Rasterizes the part of the polygon covered by `window` (absolute
    /// pixel coordinates) into a window-sized mask.
    ///
    /// All geometric decisions are made in absolute coordinates, so the
    /// result for any pixel is bit-identical to what [`Polygon::rasterize`]
    /// over the whole image would produce. Cached per-object masks cropped
    /// to their bounding boxes therefore agree exactly with full-image
    /// rasterization.
    pub fn rasterize_window(&self, window: &Rect) -> BinaryMask {
        let mut mask = BinaryMask::new(window.height() as usize, window.width() as usize);
        let bounds = self.bounding_rect();
        let y_lo = bounds.y_min.max(window.y_min);
        let y_hi = bounds.y_max.min(window.y_max);
        let n = self.vertices.len();

        let mut crossings: Vec<f64> = Vec::new();
        for y in y_lo..=y_hi {
            let py = y as f64;
            crossings.clear();
            for i in 0..n {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                if (a.y > py) != (b.y > py) {
                    let t = (py - a.y) / (b.y - a.y);
                    crossings.push(a.x + t * (b.x - a.x));
                }
            }
            crossings.sort_unstable_by(|p, q| p.partial_cmp(q).expect("finite crossings"));
            let mut k = 0;
            while k + 1 < crossings.len() {
                // Inside span is [c_k, c_{k+1}): a center exactly on the left
                // crossing has an odd number of strictly-greater crossings.
                let start = (libm::ceil(crossings[k]) as i64).max(window.x_min);
                let end_excl = (libm::ceil(crossings[k + 1]) as i64).min(window.x_max + 1);
                for x in start..end_excl {
                    mask.set(
                        (x - window.x_min) as usize,
                        (y - window.y_min) as usize,
                        true,
                    );
                }
                k += 2;
            }
        }

        // Boundary pass: centers lying on an edge are inside regardless of
        // parity.
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            mark_centers_on_segment(&mut mask, window, a, b);
        }
        mask
    }
}

/// Shared on-segment predicate; `mark_centers_on_segment` enumerates the
/// same point set, keeping rasterization and `contains_point` in agreement.
fn on_segment(px: f64, py: f64, a: Point, b: Point) -> bool {
    if a.y == b.y {
        return libm::fabs(py - a.y) <= BOUNDARY_EPS
            && px >= a.x.min(b.x) - BOUNDARY_EPS
            && px <= a.x.max(b.x) + BOUNDARY_EPS;
    }
    if py < a.y.min(b.y) - BOUNDARY_EPS || py > a.y.max(b.y) + BOUNDARY_EPS {
        return false;
    }
    let t = (py - a.y) / (b.y - a.y);
    let x = a.x + t * (b.x - a.x);
    libm::fabs(x - px) <= BOUNDARY_EPS
}

fn mark_centers_on_segment(mask: &mut BinaryMask, window: &Rect, a: Point, b: Point) {
    if a.y == b.y {
        let y = libm::round(a.y) as i64;
        if libm::fabs(a.y - y as f64) > BOUNDARY_EPS || y < window.y_min || y > window.y_max {
            return;
        }
        let x_lo = (libm::ceil(a.x.min(b.x) - BOUNDARY_EPS) as i64).max(window.x_min);
        let x_hi = (libm::floor(a.x.max(b.x) + BOUNDARY_EPS) as i64).min(window.x_max);
        for x in x_lo..=x_hi {
            mask.set(
                (x - window.x_min) as usize,
                (y - window.y_min) as usize,
                true,
            );
        }
        return;
    }
    let y_lo = (libm::ceil(a.y.min(b.y) - BOUNDARY_EPS) as i64).max(window.y_min);
    let y_hi = (libm::floor(a.y.max(b.y) + BOUNDARY_EPS) as i64).min(window.y_max);
    for y in y_lo..=y_hi {
        let t = (y as f64 - a.y) / (b.y - a.y);
        let x = a.x + t * (b.x - a.x);
        let xi = libm::round(x) as i64;
        if libm::fabs(x - xi as f64) <= BOUNDARY_EPS && xi >= window.x_min && xi <= window.x_max {
            mask.set(
                (xi - window.x_min) as usize,
                (y - window.y_min) as usize,
                true,
            );
        }
    }
}

/// Row-major boolean grid over image pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y * self.width + x] = value;
    }

    /// Number of set pixels.
    pub fn count_set(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    /// Set pixels of `other` are merged into `self`. Panics on dimension
    /// mismatch (caller aligns dimensions).
    pub fn union_with(&mut self, other: &BinaryMask) {
        assert_eq!((self.height, self.width), (other.height, other.width));
        for (dst, src) in self.bits.iter_mut().zip(&other.bits) {
            *dst |= *src;
        }
    }
}
