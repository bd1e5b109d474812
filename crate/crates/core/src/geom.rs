//! Planar points and axis-aligned rectangles.
//!
//! Containment and intersection are closed: a point on a rectangle's
//! boundary is inside it, and rectangles that share only an edge or a
//! corner intersect.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    /// Builds a point, rejecting NaN and infinite coordinates.
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::InputDomain(format!("non-finite point ({x}, {y})")));
        }
        Ok(Self { x, y })
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Total order on the bit patterns, used for deduplication and sorting.
    pub fn key(&self) -> (u64, u64) {
        (ordered_bits(self.x), ordered_bits(self.y))
    }
}

fn ordered_bits(v: f64) -> u64 {
    let v = if v == 0.0 { 0.0 } else { v };
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

/// Axis-aligned rectangle `(xmin, ymin, xmax, ymax)`. Also used as a range query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        let r = Self {
            xmin,
            ymin,
            xmax,
            ymax,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let c = [self.xmin, self.ymin, self.xmax, self.ymax];
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InputDomain(format!("non-finite rectangle {self:?}")));
        }
        if self.xmin > self.xmax || self.ymin > self.ymax {
            return Err(Error::InputDomain(format!("inverted rectangle {self:?}")));
        }
        Ok(())
    }

    /// Degenerate rectangle covering a single point.
    pub fn from_point(p: Point) -> Self {
        Self {
            xmin: p.x,
            ymin: p.y,
            xmax: p.x,
            ymax: p.y,
        }
    }

    /// Tight bounding box of a set of points, `None` when empty.
    pub fn bounding<'a, I: IntoIterator<Item = &'a Point>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = Self::from_point(*it.next()?);
        Some(it.fold(first, |acc, p| acc.expand_point(*p)))
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.xmin >= self.xmin
            && other.xmax <= self.xmax
            && other.ymin >= self.ymin
            && other.ymax <= self.ymax
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.xmin <= other.xmax
            && other.xmin <= self.xmax
            && self.ymin <= other.ymax
            && other.ymin <= self.ymax
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            xmin: self.xmin.min(other.xmin),
            ymin: self.ymin.min(other.ymin),
            xmax: self.xmax.max(other.xmax),
            ymax: self.ymax.max(other.ymax),
        }
    }

    pub fn expand_point(&self, p: Point) -> Rect {
        self.union(&Rect::from_point(p))
    }

    /// Area growth needed to also cover `other`.
    pub fn enlargement(&self, other: &Rect) -> f64 {
        self.union(other).area() - self.area()
    }

    /// Low and high side along dimension 0 (x) or 1 (y).
    pub fn side(&self, dim: usize) -> (f64, f64) {
        if dim == 0 {
            (self.xmin, self.xmax)
        } else {
            (self.ymin, self.ymax)
        }
    }

    /// The four query features in `(xmin, ymin, xmax, ymax)` order.
    pub fn features(&self) -> [f64; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }

    pub fn from_features(f: [f64; 4]) -> Result<Self> {
        Self::new(f[0], f[1], f[2], f[3])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_is_inside() {
        let r = Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(r.contains_point(&Point { x: 1.0, y: 0.5 }));
        assert!(r.contains_point(&Point { x: 0.0, y: 0.0 }));
        assert!(!r.contains_point(&Point {
            x: 1.0 + 1e-12,
            y: 0.5
        }));
    }

    #[test]
    fn touching_rects_intersect() {
        let a = Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let b = Rect::new(1.0, 1.0, 2.0, 2.0).unwrap();
        let c = Rect::new(1.5, 0.0, 2.0, 0.5).unwrap();
        assert!(a.intersects(&b));
        assert!(!a.intersects(&c));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Point::new(f64::NAN, 0.0).is_err());
        assert!(Point::new(0.0, f64::INFINITY).is_err());
        assert!(Rect::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(Rect::new(0.0, 0.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn point_key_orders_like_floats() {
        let mut v = [3.5, -1.0, 0.0, -0.0, -7.25, 1e-300];
        v.sort_by_key(|x| ordered_bits(*x));
        assert_eq!(v, [-7.25, -1.0, 0.0, -0.0, 1e-300, 3.5]);
    }

    #[test]
    fn enlargement_of_contained_rect_is_zero() {
        let a = Rect::new(0.0, 0.0, 4.0, 4.0).unwrap();
        let b = Rect::new(1.0, 1.0, 2.0, 2.0).unwrap();
        assert_eq!(a.enlargement(&b), 0.0);
        assert_eq!(b.enlargement(&a), 16.0 - 1.0);
    }
}
