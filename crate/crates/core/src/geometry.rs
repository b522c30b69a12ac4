//! Axis-aligned box arithmetic and the IoU match predicate.
//!
//! Boxes use the COCO `(x, y, w, h)` layout in real-valued pixel
//! coordinates with `(x, y)` the top-left corner. Width and height are
//! strictly positive; degenerate boxes cannot be constructed.

use serde::{Deserialize, Serialize};

use crate::error::{check_half_open_unit, check_unit, Error, Result};

/// An axis-aligned pixel rectangle with positive extent.
///
/// Serializes as the COCO array `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let invalid = |reason| Error::InvalidBox { x, y, w, h, reason };
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(invalid("coordinates must be finite"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(invalid("width and height must be positive"));
        }
        Ok(Self { x, y, w, h })
    }

    /// Builds a box from Pascal VOC style corners `(xmin, ymin, xmax, ymax)`.
    pub fn from_corners(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        Self::new(xmin, ymin, xmax - xmin, ymax - ymin)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn x_max(&self) -> f64 {
        self.x + self.w
    }

    pub fn y_max(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Intersection over union. Zero for disjoint boxes, one for identical ones.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        if self == other {
            return 1.0;
        }
        let iw = self.x_max().min(other.x_max()) - self.x.max(other.x);
        let ih = self.y_max().min(other.y_max()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            return 0.0;
        }
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    /// Clamps the box to `[0, width] x [0, height]`.
    ///
    /// Returns `None` when nothing of the box is left inside the image.
    /// Boxes already inside are returned bit-for-bit unchanged.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<BoundingBox> {
        if self.x >= 0.0 && self.y >= 0.0 && self.x_max() <= width && self.y_max() <= height {
            return Some(*self);
        }
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.x_max().min(width);
        let y1 = self.y_max().min(height);
        BoundingBox::new(x0, y0, x1 - x0, y1 - y0).ok()
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// `true` iff `iou(a, b) >= tau`. An IoU exactly at the threshold matches.
pub fn matches_at(a: &BoundingBox, b: &BoundingBox, tau: f64) -> Result<bool> {
    check_half_open_unit("iou threshold", tau)?;
    Ok(a.iou(b) >= tau)
}

/// A box with its category and, for detections, a confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    #[serde(rename = "bbox")]
    pub bbox: BoundingBox,
    pub category_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl LabeledBox {
    /// A ground-truth box (no score).
    pub fn truth(bbox: BoundingBox, category_id: u32) -> Result<Self> {
        Self::validated(bbox, category_id, None)
    }

    /// A scored detection.
    pub fn detection(bbox: BoundingBox, category_id: u32, score: f64) -> Result<Self> {
        Self::validated(bbox, category_id, Some(score))
    }

    fn validated(bbox: BoundingBox, category_id: u32, score: Option<f64>) -> Result<Self> {
        if category_id == 0 {
            return Err(Error::Validation("category ids start at 1".into()));
        }
        if let Some(s) = score {
            check_unit("score", s)?;
        }
        Ok(Self {
            bbox,
            category_id,
            score,
        })
    }

    pub fn without_score(&self) -> LabeledBox {
        LabeledBox {
            score: None,
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(b(0.0, 0.0, 10.0, 10.0).area(), 100.0);
        assert_eq!(b(5.0, 5.0, 1.0, 1.0).area(), 1.0);
        assert_eq!(b(0.0, 0.0, 3.0, 7.0).area(), 21.0);
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&b(20.0, 20.0, 5.0, 5.0)), 0.0);
        // intersection 50, union 150
        assert!((a.iou(&b(5.0, 0.0, 10.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn touching_edges_do_not_overlap() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&b(10.0, 0.0, 10.0, 10.0)), 0.0);
    }

    #[test]
    fn match_boundary_counts() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert!(matches_at(&a, &a, 0.5).unwrap());
        assert!(!matches_at(&a, &b(5.0, 0.0, 10.0, 10.0), 0.5).unwrap());
        // inside half of a: intersection 50, union 100
        let half = b(0.0, 0.0, 10.0, 5.0);
        assert_eq!(a.iou(&half), 0.5);
        assert!(matches_at(&a, &half, 0.5).unwrap());
    }

    #[test]
    fn match_rejects_bad_threshold() {
        let a = b(0.0, 0.0, 1.0, 1.0);
        assert!(matches_at(&a, &a, 0.0).is_err());
        assert!(matches_at(&a, &a, 1.5).is_err());
        assert!(matches_at(&a, &a, 1.0).unwrap());
    }

    #[test]
    fn degenerate_and_nonfinite_rejected() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 5.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 5.0, -1.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 5.0, 5.0).is_err());
        assert!(BoundingBox::new(0.0, f64::INFINITY, 5.0, 5.0).is_err());
        assert!(serde_json::from_str::<BoundingBox>("[0, 0, 0, 1]").is_err());
    }

    #[test]
    fn corners_convert_to_extent() {
        let c = BoundingBox::from_corners(10.0, 20.0, 30.0, 50.0).unwrap();
        assert_eq!(c, b(10.0, 20.0, 20.0, 30.0));
        assert!(BoundingBox::from_corners(10.0, 20.0, 10.0, 50.0).is_err());
    }

    #[test]
    fn clamping() {
        let inside = b(1.5, 2.25, 3.1, 4.7);
        assert_eq!(inside.clamp_to(100.0, 100.0), Some(inside));
        assert_eq!(
            b(-1.0, 5.0, 11.0, 100.0).clamp_to(8.0, 50.0),
            Some(b(0.0, 5.0, 8.0, 45.0))
        );
        assert_eq!(b(200.0, 0.0, 5.0, 5.0).clamp_to(100.0, 100.0), None);
    }

    #[test]
    fn labeled_box_validation() {
        let bb = b(0.0, 0.0, 1.0, 1.0);
        assert!(LabeledBox::truth(bb, 0).is_err());
        assert!(LabeledBox::detection(bb, 1, 1.2).is_err());
        assert!(LabeledBox::detection(bb, 1, 1.0).is_ok());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-100.0..100.0f64, -100.0..100.0f64, 1.0..100.0f64, 1.0..100.0f64)
            .prop_map(|(x, y, w, h)| b(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_bounded_symmetric_reflexive(a in arb_box(), c in arb_box()) {
            let i = a.iou(&c);
            prop_assert!((0.0..=1.0).contains(&i));
            prop_assert_eq!(i, c.iou(&a));
            prop_assert_eq!(a.iou(&a), 1.0);
        }

        #[test]
        fn iou_translation_and_scale_invariant(
            a in arb_box(), c in arb_box(),
            dx in -100.0..100.0f64, dy in -100.0..100.0f64, s in 0.1..10.0f64,
        ) {
            let base = a.iou(&c);
            let t = |q: &BoundingBox| b(q.x() + dx, q.y() + dy, q.w(), q.h());
            let sc = |q: &BoundingBox| b(q.x() * s, q.y() * s, q.w() * s, q.h() * s);
            prop_assert!((t(&a).iou(&t(&c)) - base).abs() < 1e-12);
            prop_assert!((sc(&a).iou(&sc(&c)) - base).abs() < 1e-12);
        }

        #[test]
        fn matches_monotone_in_threshold(a in arb_box(), c in arb_box(), t1 in 0.01..1.0f64, t2 in 0.01..1.0f64) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if matches_at(&a, &c, hi).unwrap() {
                prop_assert!(matches_at(&a, &c, lo).unwrap());
            }
        }
    }
}
