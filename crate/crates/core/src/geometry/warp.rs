use super::Homography;
use crate::error::Result;
use crate::raster::Raster;

/// Bilinear sample of channel `c` at continuous position `(x, y)`.
///
/// Pixel centres sit at half-integers, so `(i + 0.5, j + 0.5)` returns pixel
/// `(i, j)` exactly. Positions outside the centre grid clamp to the edge.
pub fn sample_bilinear(img: &Raster, x: f64, y: f64, c: usize) -> f32 {
    let (w, h) = (img.width(), img.height());
    let fx = (x - 0.5).clamp(0.0, (w - 1) as f64);
    let fy = (y - 0.5).clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
    let p = |xx: usize, yy: usize| img.get(xx, yy, c) as f64;
    let top = p(x0, y0) * (1.0 - ax) + p(x1, y0) * ax;
    let bottom = p(x0, y1) * (1.0 - ax) + p(x1, y1) * ax;
    (top * (1.0 - ay) + bottom * ay) as f32
}

/// Inverse-mapped perspective warp. `h` maps source to destination; each
/// destination pixel centre is pulled back through `h^-1`. Pull-backs that
/// leave the source extent `[0, w] x [0, h]` (or hit the horizon) are filled
/// with 1.0.
pub fn warp_perspective(
    img: &Raster,
    h: &Homography,
    out_w: usize,
    out_h: usize,
) -> Result<Raster> {
    let m = h.inverse()?.matrix();
    let ch = img.channels();
    let (sw, sh) = (img.width() as f64, img.height() as f64);
    let mut out = vec![1.0f32; out_w * out_h * ch];
    for y in 0..out_h {
        let yc = y as f64 + 0.5;
        for x in 0..out_w {
            let xc = x as f64 + 0.5;
            let d = m[2][0] * xc + m[2][1] * yc + m[2][2];
            if d.abs() <= 1e-12 {
                continue;
            }
            let sx = (m[0][0] * xc + m[0][1] * yc + m[0][2]) / d;
            let sy = (m[1][0] * xc + m[1][1] * yc + m[1][2]) / d;
            if !(0.0..=sw).contains(&sx) || !(0.0..=sh).contains(&sy) {
                continue;
            }
            let base = (y * out_w + x) * ch;
            for c in 0..ch {
                out[base + c] = sample_bilinear(img, sx, sy, c);
            }
        }
    }
    Raster::from_clamped(out_w, out_h, ch, out)
}
