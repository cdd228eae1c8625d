//! Classifier stages, segmenter training and pseudo-labeling.

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::inputs::{prepare, InputDims, InputKind, PreparedSet};
use super::{SampleRecord, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::maskops::{
    filter_components, label_components, sliding_window_filter, DEFAULT_MIN_AREA, DEFAULT_WINDOW_H,
};
use crate::nnkit::rng::{augment_rng, shuffle_rng};
use crate::nnkit::{
    bce_grad, bce_logits, cosine_lr, ftl, ftl_grad, model_forward, param_grads, pixel_dropout,
    rotate, sgd_step_in_place, Arch, FtlParams, Mode, ModelParams, Tensor, TrainConfig,
};
use crate::raster::{BinaryMask, Raster};

/// One line of a training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    pub lr: f64,
}

/// Called after every epoch with the updated parameters; `Break` stops
/// training early.
pub type EpochHook<'a> = dyn FnMut(&EpochLog, &ModelParams) -> ControlFlow<()> + 'a;

fn start_params(init: Option<&ModelParams>, arch: Arch, seed: u64) -> Result<ModelParams> {
    match init {
        Some(p) if *p.arch() != arch => Err(Error::Compatibility(format!(
            "initial weights are {:?}, data needs {:?}",
            p.arch(),
            arch
        ))),
        Some(p) => Ok(p.clone()),
        None => ModelParams::init(arch, seed),
    }
}

/// Validation that tolerates zero epochs, which simply return the start.
fn check_cfg(cfg: &TrainConfig) -> Result<()> {
    if cfg.epochs == 0 {
        return TrainConfig {
            epochs: 1,
            ..cfg.clone()
        }
        .validate();
    }
    cfg.validate()
}

/// Rotation with the configured probability, using an explicit draw so the
/// same angle can be applied to a paired mask.
fn draw_rotation(cfg: &TrainConfig, rng: &mut impl Rng) -> Option<f64> {
    let r = cfg.rotation;
    (rng.gen_bool(r.apply_prob) && r.limit_deg > 0.0)
        .then(|| rng.gen_range(-r.limit_deg..=r.limit_deg))
}

fn augment_input(
    x: &[f32],
    dims: InputDims,
    angle: Option<f64>,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Vec<f32> {
    let t = Tensor::from_parts(vec![1, dims.height, dims.width], x.to_vec());
    let t = match angle {
        Some(a) => rotate(&t, a),
        None => t,
    };
    pixel_dropout(
        &t,
        cfg.pixel_drop.apply_prob,
        cfg.pixel_drop.per_pixel_prob,
        rng,
    )
    .into_data()
}

/// Shared epoch loop: seeded per-epoch shuffle, cosine learning rate,
/// plain SGD. `step` returns the summed loss of a batch and its gradients.
fn run_epochs<F>(
    mut params: ModelParams,
    n: usize,
    cfg: &TrainConfig,
    hook: &mut EpochHook<'_>,
    mut step: F,
) -> Result<(ModelParams, Vec<EpochLog>)>
where
    F: FnMut(&ModelParams, usize, &[usize]) -> Result<(f64, Vec<Tensor>)>,
{
    let mut log = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok((params, log));
    }
    if n == 0 {
        return Err(Error::Data("no training samples".into()));
    }
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut shuffle_rng(cfg.seed, epoch));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = step(&params, epoch, batch)?;
            total += loss;
            sgd_step_in_place(&mut params, &grads, lr)?;
        }
        let entry = EpochLog {
            epoch,
            loss: total / n as f64,
            lr,
        };
        if !entry.loss.is_finite() {
            return Err(Error::State(format!(
                "training diverged at epoch {epoch} (loss {})",
                entry.loss
            )));
        }
        log.push(entry);
        if hook(&entry, &params).is_break() {
            break;
        }
    }
    Ok((params, log))
}

/// Trains the classifier with mean BCE-with-logits over the batch and both
/// augmentations. `init = None` starts from a fresh seeded initialization.
pub fn train_classifier(
    init: Option<&ModelParams>,
    data: &PreparedSet,
    cfg: &TrainConfig,
    hook: &mut EpochHook<'_>,
) -> Result<(ModelParams, Vec<EpochLog>)> {
    check_cfg(cfg)?;
    let dims = data.dims;
    let params = start_params(init, Arch::classifier(dims.height, dims.width), cfg.seed)?;
    run_epochs(params, data.len(), cfg, hook, |params, epoch, batch| {
        let mut xs = Vec::with_capacity(batch.len() * dims.width * dims.height);
        let mut ys = Vec::with_capacity(batch.len() * NUM_CLASSES);
        for &i in batch {
            let mut rng = augment_rng(cfg.seed, epoch, i);
            let angle = draw_rotation(cfg, &mut rng);
            xs.extend(augment_input(&data.inputs[i], dims, angle, cfg, &mut rng));
            ys.extend_from_slice(&data.targets[i]);
        }
        let b = batch.len();
        let x = Tensor::from_parts(vec![b, 1, dims.height, dims.width], xs);
        let y = Tensor::from_parts(vec![b, NUM_CLASSES], ys);
        let (logits, cache) = model_forward(params, &x, Mode::Train)?;
        // bce_logits averages over batch * classes; the epoch loss is
        // reported per sample.
        let loss = bce_logits(&logits, &y)? * b as f64;
        let grads = param_grads(&cache, &bce_grad(&logits, &y)?)?;
        Ok((loss, grads))
    })
}

/// One curriculum stage from records: masks (stage one) or grayscale,
/// inverted photos (stage two, or the fresh-init baseline with `init =
/// None`).
pub fn train_stage(
    init: Option<&ModelParams>,
    records: &[SampleRecord],
    kind: InputKind,
    cfg: &TrainConfig,
    dims: InputDims,
) -> Result<ModelParams> {
    if cfg.epochs == 0 {
        if let Some(p) = init {
            return Ok(p.clone());
        }
    }
    let data = prepare(records, kind, dims)?;
    Ok(train_classifier(init, &data, cfg, &mut |_, _| ControlFlow::Continue(()))?.0)
}

/// Images paired with binary trace masks at the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationSet {
    pub dims: InputDims,
    pub images: Vec<Vec<f32>>,
    pub masks: Vec<Vec<f32>>,
}

impl SegmentationSet {
    pub fn new(dims: InputDims, images: Vec<Vec<f32>>, masks: Vec<Vec<f32>>) -> Result<Self> {
        let plane = dims.width * dims.height;
        if images.len() != masks.len() {
            return Err(Error::Shape(format!(
                "{} images for {} masks",
                images.len(),
                masks.len()
            )));
        }
        if images.iter().chain(&masks).any(|v| v.len() != plane) {
            return Err(Error::Shape(format!(
                "segmentation sample is not {}x{}",
                dims.width, dims.height
            )));
        }
        Ok(Self {
            dims,
            images,
            masks,
        })
    }

    /// Loads photos and masks of every record; a record without a mask is
    /// a data error.
    pub fn from_records(records: &[SampleRecord], dims: InputDims) -> Result<Self> {
        let masks = prepare(records, InputKind::Mask, dims)?.inputs;
        let images = prepare(records, InputKind::GrayscaleInverted, dims)?.inputs;
        Self::new(dims, images, masks)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Trains the segmenter with the Focal Tversky loss, averaged over the
/// samples of a batch. Rotation is applied to image and mask alike; pixel
/// dropout to the image only.
pub fn train_segmenter(
    init: Option<&ModelParams>,
    data: &SegmentationSet,
    cfg: &TrainConfig,
    loss: &FtlParams,
    hook: &mut EpochHook<'_>,
) -> Result<(ModelParams, Vec<EpochLog>)> {
    check_cfg(cfg)?;
    let dims = data.dims;
    let params = start_params(init, Arch::segmenter(dims.height, dims.width), cfg.seed)?;
    let plane = dims.width * dims.height;
    run_epochs(params, data.len(), cfg, hook, |params, epoch, batch| {
        let b = batch.len();
        let mut xs = Vec::with_capacity(b * plane);
        let mut truths = Vec::with_capacity(b);
        for &i in batch {
            let mut rng = augment_rng(cfg.seed, epoch, i);
            let angle = draw_rotation(cfg, &mut rng);
            xs.extend(augment_input(&data.images[i], dims, angle, cfg, &mut rng));
            let m = Tensor::from_parts(vec![1, dims.height, dims.width], data.masks[i].clone());
            let m = match angle {
                Some(a) => rotate(&m, a).map(|v| if v > 0.5 { 1.0 } else { 0.0 }),
                None => m,
            };
            truths.push(m);
        }
        let x = Tensor::from_parts(vec![b, 1, dims.height, dims.width], xs);
        let (pred, cache) = model_forward(params, &x, Mode::Train)?;
        let mut total = 0.0;
        let mut g = Vec::with_capacity(b * plane);
        for (k, truth) in truths.iter().enumerate() {
            let p = pred
                .slice_outer(k, k + 1)?
                .reshape(truth.shape().to_vec())?;
            total += ftl(&p, truth, loss)?;
            g.extend(
                ftl_grad(&p, truth, loss)?
                    .data()
                    .iter()
                    .map(|v| v / b as f32),
            );
        }
        let grads = param_grads(&cache, &Tensor::from_parts(pred.shape().to_vec(), g))?;
        Ok((total, grads))
    })
}

/// Segmenter probability maps for a batch of prepared images.
pub fn segment(
    params: &ModelParams,
    images: &[Vec<f32>],
    dims: InputDims,
) -> Result<Vec<Vec<f32>>> {
    if !matches!(params.arch(), Arch::Segmenter { .. }) {
        return Err(Error::Compatibility("weights are not a segmenter".into()));
    }
    let plane = dims.width * dims.height;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(32) {
        let mut xs = Vec::with_capacity(chunk.len() * plane);
        for img in chunk {
            if img.len() != plane {
                return Err(Error::Shape(format!(
                    "image of {} values for {}x{}",
                    img.len(),
                    dims.width,
                    dims.height
                )));
            }
            xs.extend_from_slice(img);
        }
        let x = Tensor::from_parts(vec![chunk.len(), 1, dims.height, dims.width], xs);
        let (y, _) = model_forward(params, &x, Mode::Eval)?;
        out.extend(y.data().chunks(plane).map(<[f32]>::to_vec));
    }
    Ok(out)
}

/// Mask post-processing applied to thresholded segmenter output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoLabelConfig {
    /// How many unlabeled samples receive a predicted mask.
    pub count: usize,
    pub threshold: f64,
    pub window_h: usize,
    pub min_area: usize,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self {
            count: 29,
            threshold: 0.5,
            window_h: DEFAULT_WINDOW_H,
            min_area: DEFAULT_MIN_AREA,
        }
    }
}

/// Thresholds the segmenter's map of each image, then cleans it with the
/// sliding-window filter and small-component removal. Images must be
/// prepared inputs at the segmenter's size.
pub fn pseudo_label(
    params: &ModelParams,
    images: &[Raster],
    cfg: &PseudoLabelConfig,
) -> Result<Vec<(Raster, BinaryMask)>> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let (_, h, w) = params.arch().input_dims();
    let dims = InputDims {
        width: w,
        height: h,
    };
    let flat: Vec<Vec<f32>> = images
        .iter()
        .map(|img| {
            if (img.width(), img.height(), img.channels()) != (w, h, 1) {
                return Err(Error::Shape(format!(
                    "pseudo-label input is {}x{}x{}, segmenter expects {w}x{h}x1",
                    img.width(),
                    img.height(),
                    img.channels()
                )));
            }
            Ok(img.data().to_vec())
        })
        .collect::<Result<_>>()?;
    let maps = segment(params, &flat, dims)?;
    images
        .iter()
        .zip(maps)
        .map(|(img, map)| {
            let raw = BinaryMask::new(
                w,
                h,
                map.iter().map(|&p| p as f64 > cfg.threshold).collect(),
            )?;
            let banded = sliding_window_filter(&raw, cfg.window_h);
            Ok((
                img.clone(),
                filter_components(&label_components(&banded), cfg.min_area),
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::{PixelDrop, Rotation};

    fn toy_set(n: usize) -> PreparedSet {
        let dims = InputDims {
            width: 16,
            height: 16,
        };
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for i in 0..n {
            let c = i % NUM_CLASSES;
            // Class c lights up a horizontal band.
            let x: Vec<f32> = (0..256)
                .map(|p| if (p / 16) / 3 == c { 1.0 } else { 0.0 })
                .collect();
            inputs.push(x);
            let mut t = [0.0; NUM_CLASSES];
            t[c] = 1.0;
            targets.push(t);
        }
        PreparedSet::new(dims, inputs, targets).unwrap()
    }

    fn quiet(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            lr0: 0.5,
            pixel_drop: PixelDrop {
                apply_prob: 0.0,
                per_pixel_prob: 0.0,
            },
            rotation: Rotation {
                limit_deg: 0.0,
                apply_prob: 0.0,
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_return_the_start() {
        let data = toy_set(10);
        let init = ModelParams::init(Arch::classifier(16, 16), 5).unwrap();
        let (p, log) = train_classifier(Some(&init), &data, &quiet(0), &mut |_, _| {
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(p, init);
        assert!(log.is_empty());
        assert_eq!(
            train_stage(Some(&init), &[], InputKind::Mask, &quiet(0), data.dims).unwrap(),
            init
        );
    }

    #[test]
    fn classifier_loss_falls_and_log_follows_schedule() {
        let data = toy_set(40);
        let cfg = quiet(12);
        let (_, log) =
            train_classifier(None, &data, &cfg, &mut |_, _| ControlFlow::Continue(())).unwrap();
        assert_eq!(log.len(), 12);
        assert!(log.last().unwrap().loss < log[0].loss, "{log:?}");
        for e in &log {
            assert_eq!(e.lr, cosine_lr(e.epoch, &cfg).unwrap());
        }
    }

    #[test]
    fn training_is_deterministic_and_hook_can_stop() {
        let data = toy_set(20);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 6,
            lr0: 0.2,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train_classifier(None, &data, &cfg, &mut |_, _| ControlFlow::Continue(())).unwrap();
        let b = train_classifier(None, &data, &cfg, &mut |_, _| ControlFlow::Continue(())).unwrap();
        assert_eq!(a, b);
        let (_, log) = train_classifier(None, &data, &cfg, &mut |e, _| {
            if e.epoch == 1 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn mismatched_init_is_incompatible() {
        let data = toy_set(4);
        let other = ModelParams::init(Arch::classifier(32, 32), 0).unwrap();
        let r = train_classifier(Some(&other), &data, &quiet(1), &mut |_, _| {
            ControlFlow::Continue(())
        });
        assert!(matches!(r, Err(Error::Compatibility(_))));
    }

    #[test]
    fn pseudo_labels_respect_min_area() {
        let params = ModelParams::init(Arch::segmenter(16, 16), 1).unwrap();
        assert!(pseudo_label(&params, &[], &PseudoLabelConfig::default())
            .unwrap()
            .is_empty());
        let imgs: Vec<Raster> = (0..3)
            .map(|k| {
                Raster::new(
                    16,
                    16,
                    1,
                    (0..256).map(|i| ((i * (k + 3)) % 7) as f32 / 7.0).collect(),
                )
                .unwrap()
            })
            .collect();
        let cfg = PseudoLabelConfig {
            threshold: 0.3,
            min_area: 5,
            ..PseudoLabelConfig::default()
        };
        for (img, m) in pseudo_label(&params, &imgs, &cfg).unwrap() {
            assert_eq!((m.width(), m.height()), (img.width(), img.height()));
            let areas = label_components(&m).areas();
            assert!(areas[1..].iter().all(|&a| a >= 5));
        }
        let wrong = Raster::new(8, 8, 1, vec![0.0; 64]).unwrap();
        assert!(pseudo_label(&params, &[wrong], &cfg).is_err());
    }
}
