use super::{cross, signed_area, Point2};
use crate::error::{Error, Result};

/// Four corners ordered top-left, top-right, bottom-right, bottom-left
/// (clockwise on screen with `y` down). Always strictly convex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    corners: [Point2; 4],
}

impl Quad {
    /// Validates an already ordered quadrilateral.
    pub fn new(corners: [Point2; 4]) -> Result<Self> {
        if corners.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Parameter("non-finite quad corner".into()));
        }
        for i in 0..4 {
            let c = cross(corners[i], corners[(i + 1) % 4], corners[(i + 2) % 4]);
            if c <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "quad is not strictly convex in TL, TR, BR, BL order at corner {}",
                    (i + 1) % 4
                )));
            }
        }
        Ok(Self { corners })
    }

    /// Orders four points by angle about their centroid and starts at the
    /// corner with the smallest `x + y`.
    pub fn from_unordered(points: [Point2; 4]) -> Result<Self> {
        let cx = points.iter().map(|p| p.x).sum::<f64>() / 4.0;
        let cy = points.iter().map(|p| p.y).sum::<f64>() / 4.0;
        let mut pts = points;
        // With y down, increasing atan2 sweeps clockwise on screen.
        pts.sort_by(|a, b| {
            (a.y - cy)
                .atan2(a.x - cx)
                .total_cmp(&(b.y - cy).atan2(b.x - cx))
        });
        let start = (0..4)
            .min_by(|&a, &b| (pts[a].x + pts[a].y).total_cmp(&(pts[b].x + pts[b].y)))
            .expect("four points");
        pts.rotate_left(start);
        Self::new(pts)
    }

    /// Axis-aligned rectangle `[0, w] x [0, h]`.
    pub fn rect(w: f64, h: f64) -> Result<Self> {
        Self::new([
            Point2::new(0.0, 0.0),
            Point2::new(w, 0.0),
            Point2::new(w, h),
            Point2::new(0.0, h),
        ])
    }

    pub fn corners(&self) -> [Point2; 4] {
        self.corners
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.corners)
    }

    pub fn top_left(&self) -> Point2 {
        self.corners[0]
    }

    pub fn top_right(&self) -> Point2 {
        self.corners[1]
    }

    pub fn bottom_right(&self) -> Point2 {
        self.corners[2]
    }

    pub fn bottom_left(&self) -> Point2 {
        self.corners[3]
    }
}

/// Picks the four hull vertices enclosing the largest area.
///
/// For hull-ordered indices `i < j < k < l` the area splits along the
/// diagonal `i-k` into two triangles whose apexes `j` and `l` can be chosen
/// independently, which gives the exhaustive maximum over all 4-subsets in
/// `O(h^3)`. Equal areas resolve to the lexicographically smallest
/// `(i, j, k, l)`.
pub fn simplify_to_quad(hull: &[Point2]) -> Result<Quad> {
    let h = hull.len();
    if h < 4 {
        return Err(Error::Degenerate(format!(
            "hull with {h} vertices cannot give a quadrilateral"
        )));
    }
    if h == 4 {
        return Quad::from_unordered([hull[0], hull[1], hull[2], hull[3]]);
    }
    let argmax = |range: std::ops::Range<usize>, f: &dyn Fn(usize) -> f64| {
        range.fold((usize::MAX, f64::NEG_INFINITY), |best, m| {
            let v = f(m);
            if v > best.1 {
                (m, v)
            } else {
                best
            }
        })
    };
    let mut best: Option<(f64, [usize; 4])> = None;
    for i in 0..h {
        for k in i + 2..h.saturating_sub(1) {
            let (j, left) = argmax(i + 1..k, &|j| cross(hull[i], hull[j], hull[k]));
            let (l, right) = argmax(k + 1..h, &|l| cross(hull[i], hull[k], hull[l]));
            let total = left + right;
            let idx = [i, j, k, l];
            best = match best {
                Some((b, bidx)) if b > total || (b == total && bidx <= idx) => Some((b, bidx)),
                _ => Some((total, idx)),
            };
        }
    }
    let (_, [i, j, k, l]) = best.expect("at least one 4-subset");
    Quad::from_unordered([hull[i], hull[j], hull[k], hull[l]])
}
