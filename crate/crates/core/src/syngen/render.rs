//! Printing waveforms onto grid paper.

use rand::Rng;

use super::waveform::{Waveforms, RECORD_SECONDS};
use super::GenConfig;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Raster};

pub const ROWS: usize = 3;
pub const COLS: usize = 4;
const MARGIN: f64 = 6.0;
const MIN_CELL: f64 = 24.0;
/// Vertical range of a lead band in mV.
const BAND_MV: f64 = 4.2;
/// Baseline position as a fraction of the band height from its top.
const BASELINE: f64 = 0.58;

const MINOR: [f32; 3] = [1.0, 0.88, 0.88];
const MAJOR: [f32; 3] = [1.0, 0.7, 0.7];

/// Placement of the 3x4 lead grid on a page.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub cell_w: f64,
    pub band_h: f64,
    pub px_per_s: f64,
    pub px_per_mv: f64,
}

impl Layout {
    pub fn new(paper_w: usize, paper_h: usize) -> Result<Self> {
        let cell_w = (paper_w as f64 - 2.0 * MARGIN) / COLS as f64;
        let band_h = (paper_h as f64 - 2.0 * MARGIN) / ROWS as f64;
        if cell_w < MIN_CELL || band_h < MIN_CELL {
            return Err(Error::Config(format!(
                "layout overflow: a {paper_w}x{paper_h} page leaves {cell_w:.1}x{band_h:.1} px per lead, need {MIN_CELL}"
            )));
        }
        let seconds_per_col = RECORD_SECONDS / COLS as f64;
        Ok(Self { cell_w, band_h, px_per_s: cell_w / seconds_per_col, px_per_mv: band_h / BAND_MV })
    }

    /// Lead printed in row `r`, column `c`: columns hold (I, II, III),
    /// (aVR, aVL, aVF), (V1, V2, V3), (V4, V5, V6).
    pub fn lead_at(r: usize, c: usize) -> usize {
        3 * c + r
    }

    /// Top and bottom of row `r`'s band.
    pub fn band(&self, r: usize) -> (f64, f64) {
        let top = MARGIN + r as f64 * self.band_h;
        (top, top + self.band_h)
    }
}

/// Distance from `p` to the segment `a`-`b`.
fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Strokes a polyline into an opacity buffer. A pixel whose centre lies at
/// distance `d` from the line gets opacity `1 - d`, so the stroke integrates
/// to one pixel of ink across its width.
fn stroke(op: &mut [f32], w: usize, h: usize, pts: &[(f64, f64)]) {
    for seg in pts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let x0 = (a.0.min(b.0) - 1.0).floor().max(0.0) as usize;
        let x1 = ((a.0.max(b.0) + 1.0).ceil().max(0.0) as usize).min(w);
        let y0 = (a.1.min(b.1) - 1.0).floor().max(0.0) as usize;
        let y1 = ((a.1.max(b.1) + 1.0).ceil().max(0.0) as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let d = seg_dist((x as f64 + 0.5, y as f64 + 0.5), a, b);
                let o = (1.0 - d).clamp(0.0, 1.0) as f32;
                let slot = &mut op[y * w + x];
                *slot = slot.max(o);
            }
        }
    }
}

/// White paper with light-red minor/major grid and the 12 traces drawn in
/// dark ink. The mask is on where ink opacity exceeds one half.
pub fn render_paper(wave: &Waveforms, cfg: &GenConfig, rng: &mut impl Rng) -> Result<(Raster, BinaryMask)> {
    let (w, h) = (cfg.paper_w, cfg.paper_h);
    let layout = Layout::new(w, h)?;
    let minor = (layout.px_per_s * 0.1).round().max(2.0) as usize;
    let major = 5 * minor;
    let mut data = vec![1.0f32; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = (x % minor == 0, y % minor == 0);
            let color = if x % major == 0 || y % major == 0 {
                MAJOR
            } else if gx || gy {
                MINOR
            } else {
                continue;
            };
            data[(y * w + x) * 3..][..3].copy_from_slice(&color);
        }
    }

    let mut op = vec![0f32; w * h];
    let step = 0.25;
    for r in 0..ROWS {
        let (top, bottom) = layout.band(r);
        let base = top + BASELINE * layout.band_h;
        for c in 0..COLS {
            let lead = Layout::lead_at(r, c);
            let x0 = MARGIN + c as f64 * layout.cell_w + 2.0;
            let x1 = MARGIN + (c + 1) as f64 * layout.cell_w - 2.0;
            let t0 = c as f64 * RECORD_SECONDS / COLS as f64;
            let n = ((x1 - x0) / step) as usize;
            let pts: Vec<(f64, f64)> = (0..=n)
                .map(|i| {
                    let x = x0 + i as f64 * step;
                    let t = t0 + (x - (MARGIN + c as f64 * layout.cell_w)) / layout.px_per_s;
                    let y = base - wave.value(lead, t) * layout.px_per_mv;
                    (x, y.clamp(top + 1.0, bottom - 1.0))
                })
                .collect();
            stroke(&mut op, w, h, &pts);
        }
    }

    let ink = rng.gen_range(0.05f32..0.2);
    let mut bits = vec![false; w * h];
    for (i, &o) in op.iter().enumerate() {
        if o > 0.0 {
            for v in &mut data[i * 3..i * 3 + 3] {
                *v = *v * (1.0 - o) + ink * o;
            }
        }
        bits[i] = o > 0.5;
    }
    Ok((Raster::new(w, h, 3, data)?, BinaryMask::new(w, h, bits)?))
}
