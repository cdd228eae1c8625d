//! Image container and the per-image operations that run before geometry.
//!
//! A [`Raster`] stores row-major `f32` samples in `[0, 1]`, interleaved when
//! it has three channels. Rasters are immutable once built; every operation
//! returns a fresh value.

mod clahe;
mod pnm;
mod segment;

pub use clahe::{clahe, ClaheParams};
pub use pnm::{decode_pnm, encode_pnm, read_image, write_image};
pub use segment::{fill_holes, otsu_threshold, segment_background};

use crate::error::{Error, Result};

/// Luma weights for `[R, G, B]`.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major image with 1 or 3 channels and unit-interval samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Parameter(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{}x{}x{} raster needs {} samples, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a raster, clamping every sample into `[0, 1]` (NaN becomes 0).
    pub fn from_clamped(
        width: usize,
        height: usize,
        channels: usize,
        mut data: Vec<f32>,
    ) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, channels, data)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Luma for 3-channel rasters; identity (bitwise) for grayscale.
    pub fn to_grayscale(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| {
                let y = LUMA[0] * px[0] as f64 + LUMA[1] * px[1] as f64 + LUMA[2] * px[2] as f64;
                y.clamp(0.0, 1.0) as f32
            })
            .collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// `v -> 1 - v` on every sample.
    pub fn invert(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| 1.0 - v).collect(),
        }
    }

    /// Copies the rectangle `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Raster> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Parameter(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{} raster",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Ok(Raster {
            width: w,
            height: h,
            channels: c,
            data,
        })
    }

    /// Area-weighted resampling to `out_w x out_h`.
    ///
    /// Each output pixel averages the source pixels its footprint covers,
    /// weighted by overlap, so downscaling by an integer factor is an exact
    /// block mean.
    pub fn resize_area(&self, out_w: usize, out_h: usize) -> Result<Raster> {
        if out_w == 0 || out_h == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::Parameter("resize to or from an empty raster".into()));
        }
        let xs = footprints(self.width, out_w);
        let ys = footprints(self.height, out_h);
        let c = self.channels;
        let mut data = vec![0f32; out_w * out_h * c];
        let mut acc = vec![0f64; c];
        for (oy, yspan) in ys.iter().enumerate() {
            for (ox, xspan) in xs.iter().enumerate() {
                acc.iter_mut().for_each(|a| *a = 0.0);
                let mut total = 0.0;
                for &(sy, wy) in yspan {
                    for &(sx, wx) in xspan {
                        let w = wy * wx;
                        total += w;
                        let base = (sy * self.width + sx) * c;
                        for ch in 0..c {
                            acc[ch] += w * self.data[base + ch] as f64;
                        }
                    }
                }
                let o = (oy * out_w + ox) * c;
                for ch in 0..c {
                    data[o + ch] = (acc[ch] / total).clamp(0.0, 1.0) as f32;
                }
            }
        }
        Ok(Raster {
            width: out_w,
            height: out_h,
            channels: c,
            data,
        })
    }

    /// Replicates a grayscale raster into three channels.
    pub fn to_rgb(&self) -> Raster {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }
}

/// Source pixels and overlap weights covered by each output cell.
fn footprints(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let w = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                    (w > 0.0).then_some((s, w))
                })
                .collect()
        })
        .collect()
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} mask needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Intersection over union; two empty masks score 1.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Shape(
                "iou of masks with different dimensions".into(),
            ));
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok(if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        })
    }

    /// Grayscale raster with 1.0 for true and 0.0 for false.
    pub fn to_raster(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self
                .bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Thresholds a grayscale raster: true where `v > threshold`.
    pub fn from_raster(r: &Raster, threshold: f32) -> Result<Self> {
        if r.channels() != 1 {
            return Err(Error::Parameter(
                "mask conversion needs a grayscale raster".into(),
            ));
        }
        Ok(Self {
            width: r.width(),
            height: r.height(),
            bits: r.data().iter().map(|&v| v > threshold).collect(),
        })
    }
}
