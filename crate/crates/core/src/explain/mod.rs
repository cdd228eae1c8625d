//! XGrad-CAM heatmaps over the classifier's last convolution, and color
//! overlays for inspection.
//!
//! For class `c` with last-conv activations `A^k` and gradients
//! `G^k = d logit_c / d A^k`, channel `k` is weighted by
//! `w_k = sum_i G^k_i A^k_i / (sum_j A^k_j + 1e-8)`. The map
//! `relu(sum_k w_k A^k)` is bilinearly upsampled to the input size and
//! divided by its maximum. Everything runs in `f64`, on the raw logit.

mod overlay;

pub use overlay::{overlay, ramp, RAMP};

use crate::error::{Error, Result};
use crate::nnkit::{model_forward, Mode, ModelParams, Tensor};
use crate::pipeline::ClassName;
use crate::raster::Raster;

/// Guard on the activation sum in the channel weights.
pub const WEIGHT_EPS: f64 = 1e-8;

/// Single-channel class-activation map at input resolution. Values lie in
/// `[0, 1]` and the maximum is 1 unless the map is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    raster: Raster,
    class: ClassName,
}

impl Heatmap {
    /// Wraps a raster after checking the heatmap invariants.
    pub fn new(raster: Raster, class: ClassName) -> Result<Self> {
        if raster.channels() != 1 {
            return Err(Error::Shape(format!(
                "heatmap needs one channel, got {}",
                raster.channels()
            )));
        }
        let max = raster.data().iter().fold(0.0f32, |m, &v| m.max(v));
        if raster.data().iter().any(|v| !(0.0..=1.0).contains(v)) || (max > 0.0 && max != 1.0) {
            return Err(Error::Data(
                "heatmap values must lie in [0, 1] with maximum 1".into(),
            ));
        }
        Ok(Self { raster, class })
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn class(&self) -> ClassName {
        self.class
    }

    pub fn width(&self) -> usize {
        self.raster.width()
    }

    pub fn height(&self) -> usize {
        self.raster.height()
    }

    pub fn is_zero(&self) -> bool {
        self.raster.data().iter().all(|&v| v == 0.0)
    }
}

/// Per-channel XGrad-CAM weights from activations and gradients, both
/// shaped `(channels, h, w)`.
pub fn cam_weights(act: &Tensor<f64>, grad: &Tensor<f64>) -> Result<Vec<f64>> {
    if act.shape() != grad.shape() || act.shape().len() != 3 {
        return Err(Error::Shape(format!(
            "activations {:?} and gradients {:?} must share a (c, h, w) shape",
            act.shape(),
            grad.shape()
        )));
    }
    let plane = act.shape()[1] * act.shape()[2];
    Ok(act
        .data()
        .chunks(plane)
        .zip(grad.data().chunks(plane))
        .map(|(a, g)| {
            let num: f64 = a.iter().zip(g).map(|(a, g)| a * g).sum();
            num / (a.iter().sum::<f64>() + WEIGHT_EPS)
        })
        .collect())
}

/// The rectified weighted sum `relu(sum_k w_k A^k)` at activation
/// resolution, row-major `h * w`.
pub fn cam_map(act: &Tensor<f64>, grad: &Tensor<f64>) -> Result<Vec<f64>> {
    let weights = cam_weights(act, grad)?;
    let plane = act.shape()[1] * act.shape()[2];
    let mut map = vec![0.0; plane];
    for (a, w) in act.data().chunks(plane).zip(&weights) {
        for (m, a) in map.iter_mut().zip(a) {
            *m += w * a;
        }
    }
    map.iter_mut().for_each(|m| *m = m.max(0.0));
    Ok(map)
}

/// Last-conv activations and the gradient of `logit_class` with respect to
/// them, for a single input. Both come back shaped `(channels, h, w)`.
pub fn activations_and_grads(
    params: &ModelParams,
    input: &Tensor,
    class: ClassName,
) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let arch = params.arch();
    if !arch.is_classifier() {
        return Err(Error::Compatibility(
            "XGrad-CAM needs a classifier".into(),
        ));
    }
    let want = arch.input_shape(1);
    let x = match input.shape() {
        s if s == want.as_slice() => input.cast::<f64>(),
        s if s == &want[1..] => input.cast::<f64>().reshape(want.clone())?,
        s => {
            return Err(Error::Compatibility(format!(
                "input {s:?} does not match the model input {want:?}"
            )))
        }
    };
    let outputs = arch.output_shape(1)[1];
    if class.index() >= outputs {
        return Err(Error::Compatibility(format!(
            "model has {outputs} outputs, class {class} needs index {}",
            class.index()
        )));
    }
    let (_, cache) = model_forward(&params.cast::<f64>(), &x, Mode::Train)?;
    let mut onehot = Tensor::zeros(vec![1, outputs]);
    onehot.data_mut()[class.index()] = 1.0;
    let drop_batch = |t: Tensor<f64>| {
        let s = t.shape()[1..].to_vec();
        t.reshape(s)
    };
    Ok((
        drop_batch(cache.last_conv_activation()?)?,
        drop_batch(cache.last_conv_grad(&onehot)?)?,
    ))
}

/// XGrad-CAM heatmap of `class` for one input shaped like the model input
/// (with or without the leading batch axis of 1).
pub fn xgradcam(params: &ModelParams, input: &Tensor, class: ClassName) -> Result<Heatmap> {
    let (act, grad) = activations_and_grads(params, input, class)?;
    let (h, w) = (act.shape()[1], act.shape()[2]);
    let map = cam_map(&act, &grad)?;
    let (_, in_h, in_w) = params.arch().input_dims();
    Heatmap::new(upsample_normalized(&map, w, h, in_w, in_h)?, class)
}

/// Bilinear upsampling on pixel centres (edges clamp), then division by
/// the maximum. A map without positive values comes back all zero.
fn upsample_normalized(map: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Result<Raster> {
    let axis = |i: usize, n: usize, out: usize| {
        let f = ((i as f64 + 0.5) * n as f64 / out as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = f.floor() as usize;
        (i0, (i0 + 1).min(n - 1), f - i0 as f64)
    };
    let mut up = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, ay) = axis(y, h, out_h);
        for x in 0..out_w {
            let (x0, x1, ax) = axis(x, w, out_w);
            let top = map[y0 * w + x0] * (1.0 - ax) + map[y0 * w + x1] * ax;
            let bottom = map[y1 * w + x0] * (1.0 - ax) + map[y1 * w + x1] * ax;
            up.push((top * (1.0 - ay) + bottom * ay).max(0.0));
        }
    }
    let max = up.iter().fold(0.0f64, |m, &v| m.max(v));
    if max > 0.0 {
        up.iter_mut().for_each(|v| *v /= max);
    }
    Raster::new(out_w, out_h, 1, up.into_iter().map(|v| v as f32).collect())
}

#[cfg(test)]
mod tests;
