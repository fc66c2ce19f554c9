//! Axis-aligned box arithmetic.
//!
//! Boxes are stored as `(left, top, width, height)` in real-valued image pixels,
//! the same layout used by visDrone and COCO annotations.

use serde::{Deserialize, Serialize};

/// An axis-aligned box in `(left, top, width, height)` form.
///
/// Serialized as a `[x, y, w, h]` array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Builds a box from its corners `(x0, y0)` and `(x1, y1)`.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Builds a `w`×`h` box centered on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn max_side(&self) -> f64 {
        self.w.max(self.h)
    }

    /// Positive extent on both axes with finite coordinates.
    pub fn is_valid(&self) -> bool {
        self.w > 0.0
            && self.h > 0.0
            && self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
    }

    /// The overlapping region, or `None` when the boxes share no area.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 > x0 && y1 > y0 {
            Some(BBox::from_corners(x0, y0, x1, y1))
        } else {
            None
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Smallest box containing both.
    pub fn union_box(&self, other: &BBox) -> BBox {
        BBox::from_corners(
            self.x.min(other.x),
            self.y.min(other.y),
            self.right().max(other.right()),
            self.bottom().max(other.bottom()),
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Clips the box to `[0, width] x [0, height]`; `None` if nothing remains.
    pub fn clamp_to(&self, dims: ImageDims) -> Option<BBox> {
        self.intersection(&dims.as_box())
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// Lexicographic `(x, y, w, h)` comparison using the IEEE total order.
    pub fn total_cmp(&self, other: &BBox) -> std::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
    }
}

/// Image extent in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: f64,
    pub height: f64,
}

impl ImageDims {
    pub const fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()
    }

    pub fn as_box(&self) -> BBox {
        BBox::new(0.0, 0.0, self.width, self.height)
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Fraction of `inner`'s area that lies inside `region`.
pub fn coverage(inner: &BBox, region: &BBox) -> f64 {
    let area = inner.area();
    if area <= 0.0 {
        return 0.0;
    }
    (inner.intersection_area(region) / area).clamp(0.0, 1.0)
}

/// Places a `w_b`×`h_b` window as close to `seed_center` as possible while
/// keeping it inside the image. An axis where the window is at least as large
/// as the image is spanned entirely.
pub fn recenter(seed_center: (f64, f64), w_b: f64, h_b: f64, dims: ImageDims) -> BBox {
    let (x, w) = place_axis(seed_center.0, w_b, dims.width);
    let (y, h) = place_axis(seed_center.1, h_b, dims.height);
    BBox::new(x, y, w, h)
}

fn place_axis(center: f64, extent: f64, limit: f64) -> (f64, f64) {
    if extent >= limit {
        return (0.0, limit);
    }
    let mut start = (center - extent / 2.0).clamp(0.0, limit - extent);
    while start > 0.0 && start + extent > limit {
        start = start.next_down();
    }
    (start, extent)
}
