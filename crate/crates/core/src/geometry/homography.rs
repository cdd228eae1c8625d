use super::{Point2, Quad};
use crate::error::{Error, Result};

const DET_EPS: f64 = 1e-12;
const HORIZON_EPS: f64 = 1e-12;

type Mat3 = [[f64; 3]; 3];

/// Projective map of the plane with `h[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    h: Mat3,
}

fn mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

fn det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Scales `m` so its bottom-right entry is 1 and checks invertibility.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite homography entry".into()));
        }
        let s = m[2][2];
        if s.abs() <= DET_EPS {
            return Err(Error::Degenerate(
                "homography with h33 = 0 cannot be normalized".into(),
            ));
        }
        let mut h = m;
        h.iter_mut().flatten().for_each(|v| *v /= s);
        h[2][2] = 1.0;
        if det(&h).abs() <= DET_EPS {
            return Err(Error::Degenerate(format!(
                "singular homography (det {:e})",
                det(&h)
            )));
        }
        Ok(Self { h })
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            h: [[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]],
        }
    }

    pub fn scale(sx: f64, sy: f64) -> Result<Self> {
        Self::from_matrix([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.h
    }

    pub fn determinant(&self) -> f64 {
        det(&self.h)
    }

    pub fn inverse(&self) -> Result<Homography> {
        let m = &self.h;
        let d = det(m);
        if d.abs() <= DET_EPS {
            return Err(Error::Degenerate("singular homography".into()));
        }
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        Homography::from_matrix(adj)
    }

    /// `self` applied after `first`, renormalized.
    pub fn compose(&self, first: &Homography) -> Result<Homography> {
        Homography::from_matrix(mul(&self.h, &first.h))
    }

    pub fn apply(&self, p: Point2) -> Result<Point2> {
        apply_homography(self, p)
    }
}

/// `x' = (h11 x + h12 y + h13) / (h31 x + h32 y + 1)`, likewise for `y'`.
pub fn apply_homography(h: &Homography, p: Point2) -> Result<Point2> {
    let m = &h.h;
    let w = m[2][0] * p.x + m[2][1] * p.y + 1.0;
    if w.abs() <= HORIZON_EPS {
        return Err(Error::Horizon(w));
    }
    Ok(Point2::new(
        (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
        (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
    ))
}

/// Similarity moving the centroid to the origin with mean radius sqrt(2).
fn conditioner(pts: &[Point2; 4]) -> Result<Mat3> {
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mean_r = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / 4.0;
    if mean_r <= 0.0 || !mean_r.is_finite() {
        return Err(Error::Degenerate("coincident quad corners".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_r;
    Ok([[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]])
}

fn condition(t: &Mat3, p: Point2) -> Point2 {
    Point2::new(t[0][0] * p.x + t[0][2], t[1][1] * p.y + t[1][2])
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
fn solve8(mut a: [[f64; 8]; 8], mut b: [f64; 8]) -> Result<[f64; 8]> {
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .expect("non-empty");
        if a[pivot][col].abs() <= DET_EPS {
            return Err(Error::Degenerate("singular correspondence system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..8 {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..8 {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = [0.0; 8];
    for r in (0..8).rev() {
        let tail: f64 = (r + 1..8).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - tail) / a[r][r];
    }
    Ok(x)
}

/// The homography taking each corner of `src` to the matching corner of
/// `dst`.
///
/// With `h33` fixed to 1 every correspondence `(x, y) -> (u, v)` contributes
/// two linear equations in the remaining eight unknowns. Points are first
/// conditioned (centred, scaled to mean radius sqrt(2)) so the 8x8 system is
/// well scaled regardless of pixel magnitudes.
pub fn solve_homography(src: &Quad, dst: &Quad) -> Result<Homography> {
    let (s, d) = (src.corners(), dst.corners());
    let ts = conditioner(&s)?;
    let td = conditioner(&d)?;
    let mut a = [[0.0; 8]; 8];
    let mut b = [0.0; 8];
    for i in 0..4 {
        let p = condition(&ts, s[i]);
        let q = condition(&td, d[i]);
        a[2 * i] = [p.x, p.y, 1.0, 0.0, 0.0, 0.0, -q.x * p.x, -q.x * p.y];
        b[2 * i] = q.x;
        a[2 * i + 1] = [0.0, 0.0, 0.0, p.x, p.y, 1.0, -q.y * p.x, -q.y * p.y];
        b[2 * i + 1] = q.y;
    }
    let x = solve8(a, b)?;
    let hn = [[x[0], x[1], x[2]], [x[3], x[4], x[5]], [x[6], x[7], 1.0]];
    let td_inv = Homography::from_matrix(td)?.inverse()?.h;
    Homography::from_matrix(mul(&mul(&td_inv, &hn), &ts))
}
