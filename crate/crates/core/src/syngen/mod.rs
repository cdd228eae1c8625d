//! Synthetic ECG photos with exact ground truth.
//!
//! A sample is generated in three steps, all driven by one seeded stream:
//! labels are drawn from the class priors, [`gen_waveforms`] builds a
//! 12-lead record whose morphology depends on the labels, [`render_paper`]
//! prints it on grid paper (with the trace mask), and [`photograph`] puts
//! the page on a dark canvas under a random homography with lighting,
//! noise and blur.

mod photo;
mod render;
mod waveform;

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnkit::rng::sample_rng;
use crate::pipeline::{save_manifest, PerClass, SampleRecord};
use crate::raster::{decode_pnm, encode_pnm, Raster};

pub use photo::{box_blur, photograph, GroundTruth};
pub use render::{render_paper, Layout, COLS, ROWS};
pub use waveform::{gen_waveforms, BeatShape, Waveforms, AF_CV, HYP_GAIN, LEAD_NAMES, QRS_WIDEN, RECORD_SECONDS, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n: usize,
    pub seed: u64,
    pub paper_w: usize,
    pub paper_h: usize,
    pub canvas_w: usize,
    pub canvas_h: usize,
    /// Largest in-plane rotation; corner perspective jitter scales with it.
    pub max_tilt_deg: f64,
    /// Range of the multiplicative lighting gain.
    pub contrast_band: [f64; 2],
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise_std: f64,
    /// Box blur radius in pixels (0 disables).
    pub blur_radius: usize,
    /// Independent Bernoulli probability of each label.
    pub class_priors: PerClass<f64>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n: 100,
            seed: 0,
            paper_w: 384,
            paper_h: 288,
            canvas_w: 512,
            canvas_h: 400,
            max_tilt_deg: 15.0,
            contrast_band: [0.7, 1.3],
            noise_std: 0.02,
            blur_radius: 1,
            class_priors: PerClass([0.3, 0.3, 0.3, 0.25, 0.2]),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        render::Layout::new(self.paper_w, self.paper_h)?;
        if !(0.0..45.0).contains(&self.max_tilt_deg) {
            return Err(Error::Config(format!("max_tilt_deg must lie in [0, 45), got {}", self.max_tilt_deg)));
        }
        let (hx, hy) =
            photo::placed_half_extents(self.paper_w as f64, self.paper_h as f64, self.max_tilt_deg, self.max_tilt_deg);
        if 2.0 * hx > self.canvas_w as f64 || 2.0 * hy > self.canvas_h as f64 {
            return Err(Error::Config(format!(
                "a {}x{} page tilted by {} degrees does not fit a {}x{} canvas",
                self.paper_w, self.paper_h, self.max_tilt_deg, self.canvas_w, self.canvas_h
            )));
        }
        let [lo, hi] = self.contrast_band;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("contrast_band must satisfy 0 < low <= high, got [{lo}, {hi}]")));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if let Some(p) = self.class_priors.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("class priors must lie in [0, 1], got {p}")));
        }
        Ok(())
    }
}

/// One generated sample. `canvas` is already quantized to 8 bits, so it is
/// exactly what a reader of the written PPM sees.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub canvas: Raster,
    pub paper: Raster,
    pub truth: GroundTruth,
}

/// Labels and waveforms, the first draws of a sample's stream.
fn draw_record(cfg: &GenConfig, rng: &mut impl Rng) -> (PerClass<u8>, Waveforms) {
    let labels = PerClass(std::array::from_fn(|c| u8::from(rng.gen_bool(cfg.class_priors.0[c]))));
    let wave = gen_waveforms(&labels, rng);
    (labels, wave)
}

fn quantize(r: &Raster) -> Raster {
    decode_pnm(&encode_pnm(r)).expect("own encoding decodes")
}

/// Sample `index` of the dataset described by `cfg`; a pure function of
/// `(cfg, index)`.
pub fn gen_sample(cfg: &GenConfig, index: usize) -> Result<Sample> {
    cfg.validate()?;
    let mut rng = sample_rng(cfg.seed, index);
    let (labels, wave) = draw_record(cfg, &mut rng);
    let (paper, mask) = render_paper(&wave, cfg, &mut rng)?;
    let (canvas, truth) = photograph(&paper, &mask, labels, cfg, &mut rng)?;
    Ok(Sample { canvas: quantize(&canvas), paper, truth })
}

/// Writes `n` samples (`<id>.ppm`, `<id>_mask.pgm`) and `manifest.json`
/// into `out_dir` and returns the records.
pub fn gen_dataset(cfg: &GenConfig, out_dir: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    cfg.validate()?;
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let s = gen_sample(cfg, i)?;
        let id = format!("{i:05}");
        let image = dir.join(format!("{id}.ppm"));
        let mask = dir.join(format!("{id}_mask.pgm"));
        fs::write(&image, encode_pnm(&s.canvas))?;
        fs::write(&mask, encode_pnm(&s.truth.mask.to_raster()))?;
        records.push(SampleRecord {
            id,
            image,
            mask: Some(mask),
            labels: s.truth.labels,
            corners: Some(s.truth.corners.corners().map(|p| [p.x, p.y])),
            rectified: false,
        });
    }
    save_manifest(dir.join("manifest.json"), &records)?;
    Ok(records)
}

#[cfg(test)]
mod stats;
