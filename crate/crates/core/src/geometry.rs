//! Axis-aligned boxes in normalized image coordinates and the similarity
//! measures used for cross-sensor matching.
//!
//! All coordinates are fractions of the image width/height. Normalizing at
//! ingestion makes the distance-decay term of [`ddiou`] independent of the
//! sensor's pixel resolution.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Box stored as center and size, `(cx, cy, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if ![cx, cy, w, h].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite { cx, cy, w, h });
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::Degenerate { w, h });
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds a box from normalized corners `(x1, y1)`-`(x2, y2)`.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    /// Builds a box from pixel corners, normalizing by the image size.
    pub fn from_pixel_corners(
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        image_width: f64,
        image_height: f64,
    ) -> Result<Self, GeometryError> {
        if !(image_width > 0.0 && image_height > 0.0) {
            return Err(GeometryError::ImageSize {
                width: image_width,
                height: image_height,
            });
        }
        Self::from_corners(
            x1 / image_width,
            y1 / image_height,
            x2 / image_width,
            y2 / image_height,
        )
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// `(x1, y1, x2, y2)` in normalized coordinates.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let hw = self.w / 2.0;
        let hh = self.h / 2.0;
        (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)
    }

    /// `(x1, y1, x2, y2)` in pixels for an image of the given size.
    pub fn pixel_corners(&self, image_width: f64, image_height: f64) -> (f64, f64, f64, f64) {
        let (x1, y1, x2, y2) = self.corners();
        (
            x1 * image_width,
            y1 * image_height,
            x2 * image_width,
            y2 * image_height,
        )
    }

    /// Same shape moved by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    /// Same shape re-centered at `(cx, cy)`.
    pub fn recentered(&self, cx: f64, cy: f64) -> Self {
        Self { cx, cy, ..*self }
    }

    /// Every coordinate multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self, GeometryError> {
        Self::new(self.cx * k, self.cy * k, self.w * k, self.h * k)
    }
}

/// Weights for the similarity measures. `alpha1`/`alpha2` weight the center
/// and size terms of [`euclid_similarity`]; `alpha` is the decay rate of
/// [`ddiou`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha: f64,
}

impl SimilarityConfig {
    pub fn new(alpha1: f64, alpha2: f64, alpha: f64) -> Result<Self, GeometryError> {
        let cfg = Self {
            alpha1,
            alpha2,
            alpha,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for (name, value) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha", self.alpha),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(GeometryError::Weight { name, value });
            }
        }
        Ok(())
    }
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha: 1.0,
        }
    }
}

/// Euclidean distance between the two box centers.
pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    (a.cx - b.cx).hypot(a.cy - b.cy)
}

/// Weighted sum of center distance and `(w, h)` distance. Lower means more
/// similar; 0 for identical boxes.
pub fn euclid_similarity(a: &BoundingBox, b: &BoundingBox, cfg: &SimilarityConfig) -> f64 {
    let size_distance = (a.w - b.w).hypot(a.h - b.h);
    cfg.alpha1 * center_distance(a, b) + cfg.alpha2 * size_distance
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(1.0)
}

/// IoU of the two shapes after aligning their centers. Depends only on the
/// widths and heights and is always positive.
pub fn iou_star(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.w.min(b.w) * a.h.min(b.h);
    let union = a.area() + b.area() - inter;
    (inter / union).min(1.0)
}

/// Distance-decay IoU, `exp(-alpha * d) * iou_star`. Higher means more
/// similar; stays positive and distance-sensitive for non-overlapping boxes.
pub fn ddiou(a: &BoundingBox, b: &BoundingBox, cfg: &SimilarityConfig) -> f64 {
    (-cfg.alpha * center_distance(a, b)).exp() * iou_star(a, b)
}
