//! Photographing a page: placement under a random homography on a dark
//! canvas, then lighting, sensor noise and blur.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::GenConfig;
use crate::error::Result;
use crate::geometry::{sample_bilinear, solve_homography, Homography, Point2, Quad};
use crate::pipeline::PerClass;
use crate::raster::{BinaryMask, Raster};

/// Exact annotations of one generated photo.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub labels: PerClass<u8>,
    /// Trace pixels on the un-warped page.
    pub mask: BinaryMask,
    /// Page corners on the canvas, top-left, top-right, bottom-right,
    /// bottom-left, in continuous pixel coordinates.
    pub corners: Quad,
    /// The page outline on the canvas (the same four points as a polygon).
    pub paper_region: Vec<Point2>,
    /// Page-to-canvas mapping.
    pub homography: Homography,
}

/// Corner displacement bound for out-of-plane tilt, as a fraction of the
/// short page side at the maximum tilt.
const PERSPECTIVE: f64 = 0.03;
const EDGE_GAP: f64 = 4.0;

/// Half extents of the page's bounding box after rotation by `deg` plus
/// the perspective allowance.
pub(crate) fn placed_half_extents(pw: f64, ph: f64, deg: f64, max_tilt: f64) -> (f64, f64) {
    let (s, c) = deg.to_radians().abs().sin_cos();
    let jitter = PERSPECTIVE * pw.min(ph) * (max_tilt / 15.0).min(1.0);
    ((pw * c + ph * s) / 2.0 + jitter, (pw * s + ph * c) / 2.0 + jitter)
}

/// Random page placement. With zero tilt this is an integer translation.
fn place(cfg: &GenConfig, rng: &mut impl Rng) -> Result<Quad> {
    let (pw, ph) = (cfg.paper_w as f64, cfg.paper_h as f64);
    let tilt = cfg.max_tilt_deg;
    let deg = if tilt > 0.0 { rng.gen_range(-tilt..=tilt) } else { 0.0 };
    let (sin, cos) = deg.to_radians().sin_cos();
    let jitter = PERSPECTIVE * pw.min(ph) * (tilt / 15.0).min(1.0);
    let (hx, hy) = placed_half_extents(pw, ph, deg, tilt);
    let slack_x = (cfg.canvas_w as f64 / 2.0 - hx - EDGE_GAP).max(0.0);
    let slack_y = (cfg.canvas_h as f64 / 2.0 - hy - EDGE_GAP).max(0.0);
    // The unrotated page's top-left corner lands on a whole pixel.
    let cx = ((cfg.canvas_w as f64 - pw) / 2.0 + rng.gen_range(-slack_x..=slack_x)).round() + pw / 2.0;
    let cy = ((cfg.canvas_h as f64 - ph) / 2.0 + rng.gen_range(-slack_y..=slack_y)).round() + ph / 2.0;
    let mut pts = [Point2::default(); 4];
    for (k, (x, y)) in [(0.0, 0.0), (pw, 0.0), (pw, ph), (0.0, ph)].into_iter().enumerate() {
        let (dx, dy) = (x - pw / 2.0, y - ph / 2.0);
        let (jx, jy) = if jitter > 0.0 {
            (rng.gen_range(-jitter..=jitter), rng.gen_range(-jitter..=jitter))
        } else {
            (0.0, 0.0)
        };
        pts[k] = Point2::new(cx + cos * dx - sin * dy + jx, cy + sin * dx + cos * dy + jy);
    }
    Quad::new(pts)
}

/// Places `paper` on the canvas and applies the configured artifacts.
pub fn photograph(paper: &Raster, mask: &BinaryMask, labels: PerClass<u8>, cfg: &GenConfig, rng: &mut impl Rng) -> Result<(Raster, GroundTruth)> {
    let (cw, ch) = (cfg.canvas_w, cfg.canvas_h);
    let corners = place(cfg, rng)?;
    let h = solve_homography(&Quad::rect(paper.width() as f64, paper.height() as f64)?, &corners)?;
    let inv = h.inverse()?;
    let background = rng.gen_range(0.1f32..0.22);
    let (pw, ph) = (paper.width() as f64, paper.height() as f64);
    let channels = paper.channels();
    let mut data = vec![background; cw * ch * channels];
    for y in 0..ch {
        for x in 0..cw {
            let Ok(src) = inv.apply(Point2::new(x as f64 + 0.5, y as f64 + 0.5)) else { continue };
            if src.x < 0.0 || src.y < 0.0 || src.x >= pw || src.y >= ph {
                continue;
            }
            for c in 0..channels {
                data[(y * cw + x) * channels + c] = sample_bilinear(paper, src.x, src.y, c);
            }
        }
    }

    // Lighting: a bilinear gain field between four random corner gains.
    let (lo, hi) = (cfg.contrast_band[0], cfg.contrast_band[1]);
    let g: [f64; 4] = std::array::from_fn(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo });
    if g.iter().any(|&v| v != 1.0) {
        for y in 0..ch {
            let fy = (y as f64 + 0.5) / ch as f64;
            for x in 0..cw {
                let fx = (x as f64 + 0.5) / cw as f64;
                let gain = (g[0] * (1.0 - fx) + g[1] * fx) * (1.0 - fy) + (g[3] * (1.0 - fx) + g[2] * fx) * fy;
                for v in &mut data[(y * cw + x) * channels..][..channels] {
                    *v = (*v as f64 * gain).clamp(0.0, 1.0) as f32;
                }
            }
        }
    }

    if cfg.noise_std > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_std).expect("validated std");
        for v in &mut data {
            *v = (*v as f64 + noise.sample(rng)).clamp(0.0, 1.0) as f32;
        }
    }

    let mut canvas = Raster::new(cw, ch, channels, data)?;
    if cfg.blur_radius > 0 {
        canvas = box_blur(&canvas, cfg.blur_radius);
    }
    let truth = GroundTruth {
        labels,
        mask: mask.clone(),
        paper_region: corners.corners().to_vec(),
        corners,
        homography: h,
    };
    Ok((canvas, truth))
}

/// Separable `(2r + 1)`-tap box filter with edge clamping.
pub fn box_blur(img: &Raster, r: usize) -> Raster {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let taps = 2 * r + 1;
    // Clamped source coordinate of every tap, per output coordinate.
    let table = |n: usize| -> Vec<usize> {
        (0..n)
            .flat_map(|i| (0..taps).map(move |d| (i + d).saturating_sub(r).min(n - 1)))
            .collect()
    };
    let (xs, ys) = (table(w), table(h));
    let pass = |src: &[f32], horizontal: bool| -> Vec<f32> {
        let mut out = vec![0f32; src.len()];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut acc = 0.0f64;
                    if horizontal {
                        for &sx in &xs[x * taps..(x + 1) * taps] {
                            acc += src[(y * w + sx) * c + ch] as f64;
                        }
                    } else {
                        for &sy in &ys[y * taps..(y + 1) * taps] {
                            acc += src[(sy * w + x) * c + ch] as f64;
                        }
                    }
                    out[(y * w + x) * c + ch] = (acc / taps as f64) as f32;
                }
            }
        }
        out
    };
    let data = pass(&pass(img.data(), true), false);
    Raster::new(w, h, c, data).expect("same dimensions")
}
