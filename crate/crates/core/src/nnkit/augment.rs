//! Training-time augmentations on `(..., H, W)` tensors. Each call first
//! draws whether to apply at all, so the stream is consumed the same way
//! regardless of the outcome of earlier samples.

use rand::Rng;

use super::{Scalar, Tensor};

/// With probability `apply_prob`, zeroes each element independently with
/// probability `per_pixel_prob`.
pub fn pixel_dropout<S: Scalar, R: Rng>(
    img: &Tensor<S>,
    apply_prob: f64,
    per_pixel_prob: f64,
    rng: &mut R,
) -> Tensor<S> {
    if !rng.gen_bool(apply_prob.clamp(0.0, 1.0)) || per_pixel_prob <= 0.0 {
        return img.clone();
    }
    let p = per_pixel_prob.min(1.0);
    let mut out = img.clone();
    for v in out.data_mut() {
        if rng.gen_bool(p) {
            *v = S::zero();
        }
    }
    out
}

/// With probability `apply_prob`, rotates every plane about its centre by an
/// angle uniform in `[-limit_deg, limit_deg]`. Bilinear sampling; taps that
/// fall outside the image read as 0.
pub fn random_rotation<S: Scalar, R: Rng>(
    img: &Tensor<S>,
    limit_deg: f64,
    apply_prob: f64,
    rng: &mut R,
) -> Tensor<S> {
    if !rng.gen_bool(apply_prob.clamp(0.0, 1.0)) || limit_deg <= 0.0 {
        return img.clone();
    }
    let deg = rng.gen_range(-limit_deg..=limit_deg);
    rotate(img, deg)
}

/// Rotation by `deg` degrees (counter-clockwise on screen for positive
/// angles, `y` pointing down).
pub fn rotate<S: Scalar>(img: &Tensor<S>, deg: f64) -> Tensor<S> {
    let shape = img.shape();
    assert!(shape.len() >= 2, "rotate needs at least two dims");
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let plane = h * w;
    if deg == 0.0 || plane == 0 {
        return img.clone();
    }
    let (sin, cos) = deg.to_radians().sin_cos();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut out = vec![S::zero(); img.len()];
    for (src, dst) in img.data().chunks(plane).zip(out.chunks_mut(plane)) {
        let tap = |x: isize, y: isize| {
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                0.0
            } else {
                src[y as usize * w + x as usize].f64()
            }
        };
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                // Inverse map: undo a screen-CCW rotation.
                let sx = cx + cos * dx - sin * dy - 0.5;
                let sy = cy + sin * dx + cos * dy - 0.5;
                let (x0, y0) = (sx.floor(), sy.floor());
                let (ax, ay) = (sx - x0, sy - y0);
                let (x0, y0) = (x0 as isize, y0 as isize);
                let v = (tap(x0, y0) * (1.0 - ax) + tap(x0 + 1, y0) * ax) * (1.0 - ay)
                    + (tap(x0, y0 + 1) * (1.0 - ax) + tap(x0 + 1, y0 + 1) * ax) * ay;
                dst[y * w + x] = S::of(v);
            }
        }
    }
    Tensor::from_parts(shape.to_vec(), out)
}
