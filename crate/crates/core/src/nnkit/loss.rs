//! Loss kernels and their analytic gradients.

use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Focal Tversky constants. Defaults: `alpha = 1`, `beta = 10`,
/// `gamma = 0.75`, `eps = 1e-6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FtlParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eps: f64,
}

impl Default for FtlParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 10.0,
            gamma: 0.75,
            eps: 1e-6,
        }
    }
}

struct Tversky {
    tp: f64,
    fp: f64,
    fnn: f64,
}

fn tversky_sums<S: Scalar>(pred: &Tensor<S>, truth: &Tensor<S>) -> Result<Tversky> {
    pred.same_shape(truth, "ftl")?;
    let (mut tp, mut fp, mut fnn) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.data().iter().zip(truth.data()) {
        let (p, g) = (p.f64(), g.f64());
        tp += p * g;
        fp += p * (1.0 - g);
        fnn += (1.0 - p) * g;
    }
    Ok(Tversky { tp, fp, fnn })
}

/// `(1 - TI)^(1/gamma)` with
/// `TI = (TP + eps) / (TP + alpha FP + beta FN + eps)`.
pub fn ftl<S: Scalar>(pred: &Tensor<S>, truth: &Tensor<S>, c: &FtlParams) -> Result<f64> {
    let t = tversky_sums(pred, truth)?;
    let ti = (t.tp + c.eps) / (t.tp + c.alpha * t.fp + c.beta * t.fnn + c.eps);
    Ok((1.0 - ti).max(0.0).powf(1.0 / c.gamma))
}

/// Gradient of [`ftl`] with respect to each prediction.
pub fn ftl_grad<S: Scalar>(
    pred: &Tensor<S>,
    truth: &Tensor<S>,
    c: &FtlParams,
) -> Result<Tensor<S>> {
    if c.gamma <= 0.0 {
        return Err(Error::Parameter(format!(
            "gamma must be positive, got {}",
            c.gamma
        )));
    }
    let t = tversky_sums(pred, truth)?;
    let num = t.tp + c.eps;
    let den = t.tp + c.alpha * t.fp + c.beta * t.fnn + c.eps;
    let ti = num / den;
    let base = (1.0 - ti).max(0.0);
    let expo = 1.0 / c.gamma - 1.0;
    // d loss / d TI; at a perfect score with gamma > 1 the slope would be
    // infinite, but the loss is already at its minimum there.
    let outer = if base == 0.0 && expo < 0.0 {
        0.0
    } else {
        -(1.0 / c.gamma) * base.powf(expo)
    };
    let data = truth
        .data()
        .iter()
        .map(|&g| {
            let g = g.f64();
            let dnum = g;
            let dden = g + c.alpha * (1.0 - g) - c.beta * g;
            S::of(outer * (dnum * den - num * dden) / (den * den))
        })
        .collect();
    Ok(Tensor::from_parts(pred.shape().to_vec(), data))
}

/// Mean of `max(z, 0) - z y + ln(1 + exp(-|z|))` over all elements.
pub fn bce_logits<S: Scalar>(logits: &Tensor<S>, labels: &Tensor<S>) -> Result<f64> {
    logits.same_shape(labels, "bce_logits")?;
    if logits.is_empty() {
        return Err(Error::Shape("empty logits".into()));
    }
    let sum: f64 = logits
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&z, &y)| {
            let (z, y) = (z.f64(), y.f64());
            z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
        })
        .sum();
    Ok(sum / logits.len() as f64)
}

/// `(sigmoid(z) - y) / N` elementwise.
pub fn bce_grad<S: Scalar>(logits: &Tensor<S>, labels: &Tensor<S>) -> Result<Tensor<S>> {
    logits.same_shape(labels, "bce_grad")?;
    let n = logits.len() as f64;
    let data = logits
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&z, &y)| S::of((sigmoid(z.f64()) - y.f64()) / n))
        .collect();
    Ok(Tensor::from_parts(logits.shape().to_vec(), data))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
