//! Contrast limited adaptive histogram equalization.

use serde::{Deserialize, Serialize};

use super::Raster;
use crate::error::{Error, Result};

const BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaheParams {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Clip height as a multiple of the uniform bin height `area / 256`.
    /// `f64::INFINITY` disables clipping.
    pub clip_limit: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tiles_x: 8,
            tiles_y: 8,
            clip_limit: 2.0,
        }
    }
}

#[inline]
fn bin_of(v: f32) -> usize {
    ((v as f64) * 255.0 + 0.5).floor().clamp(0.0, 255.0) as usize
}

/// Tile spans along one axis; the last tile absorbs the remainder.
fn spans(len: usize, tiles: usize) -> Vec<(usize, usize)> {
    let step = len / tiles;
    (0..tiles)
        .map(|i| (i * step, if i + 1 == tiles { len } else { (i + 1) * step }))
        .collect()
}

/// Interpolation cell for a coordinate: the two neighbouring tile indices and
/// the weight of the second one.
fn locate(pos: f64, centers: &[f64]) -> (usize, usize, f64) {
    let last = centers.len() - 1;
    if pos <= centers[0] {
        return (0, 0, 0.0);
    }
    if pos >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.partition_point(|&c| c <= pos) - 1;
    let w = (pos - centers[i]) / (centers[i + 1] - centers[i]);
    (i, i + 1, w)
}

fn tile_lut(
    r: &Raster,
    (x0, x1): (usize, usize),
    (y0, y1): (usize, usize),
    clip: f64,
) -> [f64; BINS] {
    let mut hist = [0f64; BINS];
    for y in y0..y1 {
        for x in x0..x1 {
            hist[bin_of(r.get(x, y, 0))] += 1.0;
        }
    }
    let area = ((x1 - x0) * (y1 - y0)) as f64;
    if clip.is_finite() {
        let limit = clip * area / BINS as f64;
        let mut excess = 0.0;
        for h in &mut hist {
            if *h > limit {
                excess += *h - limit;
                *h = limit;
            }
        }
        let share = excess / BINS as f64;
        hist.iter_mut().for_each(|h| *h += share);
    }
    let mut lut = [0f64; BINS];
    let mut cdf = 0.0;
    for (l, h) in lut.iter_mut().zip(hist) {
        cdf += h;
        *l = (cdf / area).clamp(0.0, 1.0);
    }
    lut
}

/// Equalizes a grayscale raster tile by tile.
///
/// Each tile builds a 256-bin histogram, clips it at `clip_limit` times the
/// uniform bin height, spreads the clipped excess evenly over all bins and
/// maps through the normalized CDF. Every output pixel bilinearly blends the
/// mappings of the four nearest tile centres.
pub fn clahe(r: &Raster, params: &ClaheParams) -> Result<Raster> {
    let ClaheParams {
        tiles_x,
        tiles_y,
        clip_limit,
    } = *params;
    if r.channels() != 1 {
        return Err(Error::Parameter(
            "clahe needs a single-channel raster".into(),
        ));
    }
    if tiles_x == 0 || tiles_y == 0 || tiles_x > r.width() || tiles_y > r.height() {
        return Err(Error::Parameter(format!(
            "{tiles_x}x{tiles_y} tiles do not fit a {}x{} image",
            r.width(),
            r.height()
        )));
    }
    if clip_limit.is_nan() || clip_limit <= 0.0 {
        return Err(Error::Parameter(format!(
            "clip limit must be positive, got {clip_limit}"
        )));
    }
    let xs = spans(r.width(), tiles_x);
    let ys = spans(r.height(), tiles_y);
    let luts: Vec<[f64; BINS]> = ys
        .iter()
        .flat_map(|&ys| xs.iter().map(move |&xs| (xs, ys)))
        .map(|(xs, ys)| tile_lut(r, xs, ys, clip_limit))
        .collect();
    let center = |&(a, b): &(usize, usize)| (a + b - 1) as f64 / 2.0;
    let cx: Vec<f64> = xs.iter().map(center).collect();
    let cy: Vec<f64> = ys.iter().map(center).collect();
    let xcell: Vec<_> = (0..r.width()).map(|x| locate(x as f64, &cx)).collect();

    let mut out = Vec::with_capacity(r.width() * r.height());
    for y in 0..r.height() {
        let (j0, j1, wy) = locate(y as f64, &cy);
        for (x, &(i0, i1, wx)) in xcell.iter().enumerate() {
            let b = bin_of(r.get(x, y, 0));
            let at = |i: usize, j: usize| luts[j * tiles_x + i][b];
            let top = (1.0 - wx) * at(i0, j0) + wx * at(i1, j0);
            let bottom = (1.0 - wx) * at(i0, j1) + wx * at(i1, j1);
            out.push(((1.0 - wy) * top + wy * bottom).clamp(0.0, 1.0) as f32);
        }
    }
    Raster::new(r.width(), r.height(), 1, out)
}
