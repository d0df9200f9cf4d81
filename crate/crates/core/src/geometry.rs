//! Axis-aligned box algebra and the overlap / distance scores used by every
//! metric in the crate.
//!
//! Boxes are `(left, top, width, height)` in continuous pixel coordinates.
//! Areas are always computed from edge coordinates (`right - left`) so that
//! the intersection of a box with itself has exactly the box's own area and
//! every self-overlap score is exactly `1.0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box has non-finite coordinates: {0:?}")]
    NonFinite(BoundingBox),
    #[error("box has non-positive size: w={w}, h={h}")]
    NonPositiveSize { w: f64, h: f64 },
    #[error("frame size must be at least 1x1, got {width}x{height}")]
    EmptyFrame { width: u32, height: u32 },
    #[error("normalized precision is undefined: zero normalizer")]
    ZeroNormalizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Frame dimensions in whole pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSize {
    pub width: u32,
    pub height: u32,
}

impl FrameSize {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyFrame { width, height });
        }
        Ok(Self { width, height })
    }

    /// The four corners of the continuous frame rectangle `[0,W]x[0,H]`.
    pub fn corners(self) -> [Point; 4] {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        [
            Point::new(0.0, 0.0),
            Point::new(w, 0.0),
            Point::new(0.0, h),
            Point::new(w, h),
        ]
    }
}

/// Axis-aligned rectangle `(x, y, w, h)` with `(x, y)` the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Builds a box and checks that it can take part in overlap scores.
    pub fn try_new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let b = Self::new(x, y, w, h);
        b.validate()?;
        Ok(b)
    }

    /// Builds a box from corner coordinates `(x1, y1, x2, y2)`.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self::new(x1, y1, x2 - x1, y2 - y1)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite(*self));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(GeometryError::NonPositiveSize { w: self.w, h: self.h });
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        (self.right() - self.x) * (self.bottom() - self.y)
    }

    pub fn center(&self) -> Point {
        center(self)
    }

    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= self.x && p.x <= self.right() && p.y >= self.y && p.y <= self.bottom()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

impl From<[f64; 4]> for BoundingBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

pub fn center(b: &BoundingBox) -> Point {
    Point::new(b.x + b.w / 2.0, b.y + b.h / 2.0)
}

/// Overlap rectangle of two boxes. Edge contact has zero area and yields `None`.
pub fn intersect(a: &BoundingBox, b: &BoundingBox) -> Option<BoundingBox> {
    let left = a.x.max(b.x);
    let top = a.y.max(b.y);
    let right = a.right().min(b.right());
    let bottom = a.bottom().min(b.bottom());
    if right <= left || bottom <= top {
        return None;
    }
    Some(BoundingBox::from_corners(left, top, right, bottom))
}

/// Smallest axis-aligned box containing both arguments.
pub fn enclose(a: &BoundingBox, b: &BoundingBox) -> BoundingBox {
    BoundingBox::from_corners(
        a.x.min(b.x),
        a.y.min(b.y),
        a.right().max(b.right()),
        a.bottom().max(b.bottom()),
    )
}

fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = a.right().min(b.right()) - a.x.max(b.x);
    let h = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

fn enclosing_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = a.right().max(b.right()) - a.x.min(b.x);
    let h = a.bottom().max(b.bottom()) - a.y.min(b.y);
    w * h
}

fn union_area(a: &BoundingBox, b: &BoundingBox, inter: f64) -> f64 {
    a.area() + b.area() - inter
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = union_area(a, b, inter);
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Generalized IoU: `IoU - |C \ (A ∪ B)| / |C|` with `C` the enclosing box.
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = union_area(a, b, inter);
    let hull = enclosing_area(a, b);
    if union <= 0.0 || hull <= 0.0 {
        return -1.0;
    }
    let iou = inter / union;
    (iou - (hull - union) / hull).clamp(-1.0, 1.0)
}

/// Distance IoU: IoU minus the squared center distance over the squared
/// diagonal of the enclosing box.
pub fn diou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let hull = enclose(a, b);
    let diag_sq = hull.w * hull.w + hull.h * hull.h;
    if diag_sq <= 0.0 {
        return -1.0;
    }
    let (ca, cb) = (center(a), center(b));
    let dist_sq = (ca.x - cb.x).powi(2) + (ca.y - cb.y).powi(2);
    (iou(a, b) - dist_sq / diag_sq).clamp(-1.0, 1.0)
}

pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    center(a).distance(center(b))
}

/// Euclidean distance from `p` to the box as a closed point set; zero inside.
pub fn point_to_box_distance(p: Point, b: &BoundingBox) -> f64 {
    let dx = (b.x - p.x).max(0.0).max(p.x - b.right());
    let dy = (b.y - p.y).max(0.0).max(p.y - b.bottom());
    dx.hypot(dy)
}

/// Un-normalized N-PRE value of a predicted center `q` against `gt`:
/// center distance plus the distance from `q` to the box.
pub fn npre_raw(q: Point, gt: &BoundingBox) -> f64 {
    q.distance(center(gt)) + point_to_box_distance(q, gt)
}

/// Maximum of [`npre_raw`] over the continuous frame rectangle.
///
/// Both summands are convex in `q`, so the maximum over a rectangle is
/// attained at one of its corners.
pub fn npre_normalizer(gt: &BoundingBox, frame: FrameSize) -> f64 {
    frame
        .corners()
        .into_iter()
        .map(|c| npre_raw(c, gt))
        .fold(0.0, f64::max)
}

/// Normalized precision score in `[0, 1]`: 0 when the predicted center sits on
/// the ground-truth center, 1 at the worst point of the frame. Centers that
/// fall outside the frame saturate at 1.
pub fn npre_value(pred: &BoundingBox, gt: &BoundingBox, frame: FrameSize) -> Result<f64, GeometryError> {
    let norm = npre_normalizer(gt, frame);
    if norm <= 0.0 || !norm.is_finite() {
        return Err(GeometryError::ZeroNormalizer);
    }
    Ok((npre_raw(center(pred), gt) / norm).clamp(0.0, 1.0))
}

/// Element-wise mean of `(x, y, w, h)`.
pub fn average_box(a: &BoundingBox, b: &BoundingBox) -> BoundingBox {
    BoundingBox::new(
        (a.x + b.x) / 2.0,
        (a.y + b.y) / 2.0,
        (a.w + b.w) / 2.0,
        (a.h + b.h) / 2.0,
    )
}

/// True iff `inner` lies entirely inside `outer`; shared edges are allowed.
pub fn contains(outer: &BoundingBox, inner: &BoundingBox) -> bool {
    inner.x >= outer.x
        && inner.y >= outer.y
        && inner.right() <= outer.right()
        && inner.bottom() <= outer.bottom()
}
