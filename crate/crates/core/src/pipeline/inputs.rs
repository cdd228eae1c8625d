//! Turning records into network inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SampleRecord, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::geometry::rectify;
use crate::raster::{read_image, BinaryMask, Raster};

/// Network input size. Rectified pages are resampled to this by area
/// averaging, whatever their aspect ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDims {
    pub width: usize,
    pub height: usize,
}

impl Default for InputDims {
    fn default() -> Self {
        Self {
            width: 128,
            height: 96,
        }
    }
}

/// What the classifier sees: trace masks (stage one) or rectified,
/// grayscale, inverted photos (stage two and inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Mask,
    GrayscaleInverted,
}

/// Rectifies (unless already rectified), converts to grayscale, inverts
/// and resamples.
pub fn image_input(img: &Raster, already_rectified: bool, dims: InputDims) -> Result<Raster> {
    let page = if already_rectified {
        img.clone()
    } else {
        rectify(img)?
    };
    page.to_grayscale()
        .invert()
        .resize_area(dims.width, dims.height)
}

/// Resamples a trace mask; an output pixel is on when any trace pixel
/// falls in its footprint, so thin strokes survive downscaling.
pub fn mask_input(mask: &BinaryMask, dims: InputDims) -> Result<BinaryMask> {
    let area = mask.to_raster().resize_area(dims.width, dims.height)?;
    BinaryMask::from_raster(&area, 0.0)
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    BinaryMask::from_raster(&read_image(path)?.to_grayscale(), 0.5)
}

/// In-memory inputs and targets, one flat `height * width` plane per
/// sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSet {
    pub dims: InputDims,
    pub inputs: Vec<Vec<f32>>,
    pub targets: Vec<[f32; NUM_CLASSES]>,
}

impl PreparedSet {
    pub fn new(
        dims: InputDims,
        inputs: Vec<Vec<f32>>,
        targets: Vec<[f32; NUM_CLASSES]>,
    ) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs for {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(bad) = inputs.iter().find(|x| x.len() != dims.width * dims.height) {
            return Err(Error::Shape(format!(
                "input of {} values for {}x{}",
                bad.len(),
                dims.width,
                dims.height
            )));
        }
        Ok(Self {
            dims,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn labels(&self) -> Vec<super::PerClass<u8>> {
        self.targets
            .iter()
            .map(|t| super::PerClass(t.map(|v| u8::from(v > 0.5))))
            .collect()
    }
}

/// Loads every record as `kind`. Mask mode needs a mask on every record.
pub fn prepare(records: &[SampleRecord], kind: InputKind, dims: InputDims) -> Result<PreparedSet> {
    if kind == InputKind::Mask {
        if let Some(r) = records.iter().find(|r| r.mask.is_none()) {
            return Err(Error::Data(format!("sample '{}' has no mask", r.id)));
        }
    }
    let mut inputs = Vec::with_capacity(records.len());
    for r in records {
        let plane = match kind {
            InputKind::Mask => {
                mask_input(&load_mask(r.mask.as_deref().expect("checked"))?, dims)?.to_raster()
            }
            InputKind::GrayscaleInverted => image_input(&read_image(&r.image)?, r.rectified, dims)?,
        };
        inputs.push(plane.into_data());
    }
    PreparedSet::new(
        dims,
        inputs,
        records.iter().map(SampleRecord::targets).collect(),
    )
}
