//! Paper boundary geometry and perspective rectification.
//!
//! Coordinates are continuous pixel coordinates with `y` pointing down; the
//! centre of pixel `(i, j)` sits at `(i + 0.5, j + 0.5)`.

mod homography;
mod hull;
mod quad;
mod rectify;
mod warp;

pub use homography::{apply_homography, solve_homography, Homography};
pub use hull::convex_hull;
pub use quad::{simplify_to_quad, Quad};
pub use rectify::{rectify, rectify_detailed, Rectified, RectifyParams};
pub use warp::{sample_bilinear, warp_perspective};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// z-component of `(b - a) x (c - a)`.
#[inline]
pub fn cross(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Shoelace signed area; positive for counter-clockwise order in the
/// mathematical (y-up) sense, which is clockwise on screen.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Whether `p` lies inside (or on) the convex polygon `poly`, whichever its
/// orientation.
pub fn point_in_convex(poly: &[Point2], p: Point2) -> bool {
    let n = poly.len();
    let mut sign = 0.0f64;
    for i in 0..n {
        let c = cross(poly[i], poly[(i + 1) % n], p);
        if c != 0.0 {
            if sign != 0.0 && c.signum() != sign {
                return false;
            }
            sign = c.signum();
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_and_containment() {
        let sq = [
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 2.0),
        ];
        assert_eq!(signed_area(&sq), 4.0);
        assert!(point_in_convex(&sq, Point2::new(1.0, 1.0)));
        assert!(point_in_convex(&sq, Point2::new(2.0, 1.0)));
        assert!(!point_in_convex(&sq, Point2::new(2.1, 1.0)));
    }
}
