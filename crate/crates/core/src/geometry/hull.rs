use super::{cross, Point2};
use crate::error::{Error, Result};

/// Convex hull by Andrew's monotone chain.
///
/// Vertices come back counter-clockwise in the mathematical sense (every
/// consecutive triple has positive cross product), starting at the point with
/// the smallest `x` (then smallest `y`). Collinear boundary points are dropped.
pub fn convex_hull(points: &[Point2]) -> Result<Vec<Point2>> {
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::Parameter("non-finite point".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{} distinct points cannot span a hull",
            pts.len()
        )));
    }

    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(Error::Degenerate("all points are collinear".into()));
    }
    Ok(hull)
}
