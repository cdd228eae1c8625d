use super::Heatmap;
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Five-stop jet ramp: blue, cyan, green, yellow, red at 0, 1/4, 1/2, 3/4
/// and 1, linear in between.
pub const RAMP: [[f32; 3]; 5] = [
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [0.0, 1.0, 0.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 0.0],
];

/// Ramp color of `v`, clamped to `[0, 1]`.
pub fn ramp(v: f32) -> [f32; 3] {
    let f = v.clamp(0.0, 1.0) * (RAMP.len() - 1) as f32;
    let i = (f.floor() as usize).min(RAMP.len() - 2);
    let t = f - i as f32;
    std::array::from_fn(|c| RAMP[i][c] * (1.0 - t) + RAMP[i + 1][c] * t)
}

/// `(1 - alpha) * gray(base) + alpha * ramp(heat)` per pixel, as RGB.
pub fn overlay(base: &Raster, heat: &Heatmap, alpha: f64) -> Result<Raster> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!(
            "overlay alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if (base.width(), base.height()) != (heat.width(), heat.height()) {
        return Err(Error::Shape(format!(
            "base is {}x{}, heatmap is {}x{}",
            base.width(),
            base.height(),
            heat.width(),
            heat.height()
        )));
    }
    let a = alpha as f32;
    let gray = base.to_grayscale();
    let mut out = Vec::with_capacity(gray.data().len() * 3);
    for (&g, &h) in gray.data().iter().zip(heat.raster().data()) {
        let color = ramp(h);
        out.extend(color.iter().map(|&c| (1.0 - a) * g + a * c));
    }
    Raster::new(base.width(), base.height(), 3, out)
}
