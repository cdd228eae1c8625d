use serde::{Deserialize, Serialize};

use super::{
    convex_hull, simplify_to_quad, solve_homography, warp_perspective, Homography, Point2, Quad,
};
use crate::error::{Error, Result};
use crate::raster::{clahe, segment_background, BinaryMask, ClaheParams, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectifyParams {
    pub clahe: ClaheParams,
}

/// A rectified paper together with the geometry that produced it.
#[derive(Debug, Clone)]
pub struct Rectified {
    pub image: Raster,
    /// Detected paper corners in the input image.
    pub corners: Quad,
    /// Input to output mapping.
    pub homography: Homography,
}

/// Pixel corners of every mask pixel that touches the outside of the mask.
/// Only these can be hull vertices, and using corners rather than centres
/// makes the hull cover the full pixel footprint.
fn boundary_corners(mask: &BinaryMask) -> Vec<Point2> {
    let (w, h) = (mask.width(), mask.height());
    let inside = |x: isize, y: isize| {
        x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && mask.get(x as usize, y as usize)
    };
    let mut pts = Vec::new();
    for y in 0..h as isize {
        for x in 0..w as isize {
            if !inside(x, y) {
                continue;
            }
            if inside(x - 1, y) && inside(x + 1, y) && inside(x, y - 1) && inside(x, y + 1) {
                continue;
            }
            let (fx, fy) = (x as f64, y as f64);
            pts.extend([
                Point2::new(fx, fy),
                Point2::new(fx + 1.0, fy),
                Point2::new(fx + 1.0, fy + 1.0),
                Point2::new(fx, fy + 1.0),
            ]);
        }
    }
    pts
}

/// Locates the paper and maps it onto an upright rectangle.
///
/// Detection runs on the CLAHE-equalized luma; the warp resamples the
/// original image so colours and intensities are preserved.
pub fn rectify_detailed(img: &Raster, params: &RectifyParams) -> Result<Rectified> {
    let eq = clahe(&img.to_grayscale(), &params.clahe)?;
    let mask = segment_background(&eq)?;
    let hull = convex_hull(&boundary_corners(&mask))?;
    let corners = simplify_to_quad(&hull)?;
    let [tl, tr, br, bl] = corners.corners();
    let out_w = tl.dist(tr).max(bl.dist(br)).round() as usize;
    let out_h = tl.dist(bl).max(tr.dist(br)).round() as usize;
    if out_w == 0 || out_h == 0 {
        return Err(Error::Degenerate("detected paper has zero extent".into()));
    }
    let homography = solve_homography(&corners, &Quad::rect(out_w as f64, out_h as f64)?)?;
    let image = warp_perspective(img, &homography, out_w, out_h)?;
    Ok(Rectified {
        image,
        corners,
        homography,
    })
}

pub fn rectify(img: &Raster) -> Result<Raster> {
    rectify_detailed(img, &RectifyParams::default()).map(|r| r.image)
}
