use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Coordinate frame a landmark set lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// Pixels of the source image.
    Original,
    /// Pixels of the resized network input.
    Crop,
    /// Crop pixels with the origin moved to the crop center, rotation-normalized.
    Canonical,
}

/// An ordered set of 2D landmarks tagged with its coordinate frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub points: Vec<Point>,
    pub frame: Frame,
}

/// Axis-aligned bounding box `(x0, y0, width, height)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

impl LandmarkSet {
    pub const MIN_POINTS: usize = 3;

    /// Builds a set after checking the count and finiteness invariants.
    pub fn new(points: Vec<Point>, frame: Frame) -> Result<Self> {
        if points.len() < Self::MIN_POINTS {
            return Err(Error::InsufficientData(format!(
                "a landmark set needs at least {} points, got {}",
                Self::MIN_POINTS,
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InsufficientData(format!("landmark {i} is not finite")));
        }
        Ok(LandmarkSet { points, frame })
    }

    /// Interleaved `[x0, y0, x1, y1, ...]`.
    pub fn from_flat(flat: &[f64], frame: Frame) -> Self {
        debug_assert!(flat.len() % 2 == 0);
        let points = flat.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
        LandmarkSet { points, frame }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point {
        centroid_of(self.points.iter().copied())
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        BoundingBox {
            x0,
            y0,
            width: x1 - x0,
            height: y1 - y0,
        }
    }

    /// Applies `f` to every point and retags the frame.
    pub fn map_points(&self, frame: Frame, f: impl Fn(Point) -> Point) -> LandmarkSet {
        LandmarkSet {
            points: self.points.iter().map(|&p| f(p)).collect(),
            frame,
        }
    }

    /// Crop frame to canonical: shifts the origin to the crop center.
    pub fn crop_to_canonical(&self, center: Point) -> LandmarkSet {
        self.map_points(Frame::Canonical, |p| Point::new(p.x - center.x, p.y - center.y))
    }

    /// Rotates every point by `angle` radians about `pivot`.
    pub fn rotated_about(&self, pivot: Point, angle: f64) -> LandmarkSet {
        let (s, c) = angle.sin_cos();
        self.map_points(self.frame, |p| {
            let dx = p.x - pivot.x;
            let dy = p.y - pivot.y;
            Point::new(pivot.x + c * dx - s * dy, pivot.y + s * dx + c * dy)
        })
    }
}

pub(crate) fn centroid_of(points: impl Iterator<Item = Point>) -> Point {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        sx += p.x;
        sy += p.y;
        n += 1;
    }
    Point::new(sx / n as f64, sy / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_and_non_finite_sets() {
        let two = vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0)];
        assert!(LandmarkSet::new(two, Frame::Original).is_err());
        let nan = vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(f64::NAN, 0.0)];
        assert!(LandmarkSet::new(nan, Frame::Original).is_err());
    }

    #[test]
    fn flat_round_trip_and_bbox() {
        let s = LandmarkSet::from_flat(&[1.0, 2.0, 5.0, -1.0, 3.0, 4.0], Frame::Crop);
        assert_eq!(s.to_flat(), vec![1.0, 2.0, 5.0, -1.0, 3.0, 4.0]);
        let b = s.bounding_box();
        assert_eq!((b.x0, b.y0, b.width, b.height), (1.0, -1.0, 4.0, 5.0));
        assert_eq!(s.centroid(), Point::new(3.0, 5.0 / 3.0));
    }
}
