use serde::{Deserialize, Serialize};

use super::{ModelParams, Scalar, Tensor};
use crate::error::{Error, Result};

/// "Pixel drop" augmentation: applied to a sample with `apply_prob`, then
/// each pixel is zeroed with `per_pixel_prob`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelDrop {
    pub apply_prob: f64,
    pub per_pixel_prob: f64,
}

/// Rotation augmentation: applied with `apply_prob`, angle uniform in
/// `[-limit_deg, limit_deg]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rotation {
    pub limit_deg: f64,
    pub apply_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub pixel_drop: PixelDrop,
    pub rotation: Rotation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 100,
            lr0: 0.001,
            lr_min: 0.0,
            pixel_drop: PixelDrop {
                apply_prob: 0.8,
                per_pixel_prob: 0.01,
            },
            rotation: Rotation {
                limit_deg: 10.0,
                apply_prob: 0.5,
            },
            seed: 0,
        }
    }
}

fn probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr_min >= 0.0 && self.lr0 > self.lr_min && self.lr0.is_finite()) {
            return Err(Error::Config(format!(
                "need lr0 > lr_min >= 0, got lr0 {} lr_min {}",
                self.lr0, self.lr_min
            )));
        }
        probability("pixel_drop.apply_prob", self.pixel_drop.apply_prob)?;
        probability("pixel_drop.per_pixel_prob", self.pixel_drop.per_pixel_prob)?;
        probability("rotation.apply_prob", self.rotation.apply_prob)?;
        if !(self.rotation.limit_deg >= 0.0 && self.rotation.limit_deg.is_finite()) {
            return Err(Error::Config(format!(
                "rotation.limit_deg must be >= 0, got {}",
                self.rotation.limit_deg
            )));
        }
        Ok(())
    }
}

/// `lr_min + (lr0 - lr_min) (1 + cos(pi t / epochs)) / 2`.
pub fn cosine_lr(t: usize, cfg: &TrainConfig) -> Result<f64> {
    if cfg.epochs == 0 || t > cfg.epochs {
        return Err(Error::Parameter(format!(
            "epoch {t} outside [0, {}]",
            cfg.epochs
        )));
    }
    let phase = std::f64::consts::PI * t as f64 / cfg.epochs as f64;
    Ok(cfg.lr_min + 0.5 * (cfg.lr0 - cfg.lr_min) * (1.0 + phase.cos()))
}

fn check_grads<S: Scalar>(params: &ModelParams<S>, grads: &[Tensor<S>]) -> Result<()> {
    if grads.len() != params.tensors().len() {
        return Err(Error::Shape(format!(
            "{} gradients for {} tensors",
            grads.len(),
            params.tensors().len()
        )));
    }
    for (p, g) in params.tensors().iter().zip(grads) {
        p.same_shape(g, "sgd_step")?;
    }
    Ok(())
}

/// `theta <- theta - lr * grad`, in place.
pub fn sgd_step_in_place<S: Scalar>(
    params: &mut ModelParams<S>,
    grads: &[Tensor<S>],
    lr: f64,
) -> Result<()> {
    check_grads(params, grads)?;
    let lr = S::of(lr);
    for (p, g) in params.tensors_mut().iter_mut().zip(grads) {
        for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * d;
        }
    }
    Ok(())
}

pub fn sgd_step<S: Scalar>(
    params: &ModelParams<S>,
    grads: &[Tensor<S>],
    lr: f64,
) -> Result<ModelParams<S>> {
    let mut next = params.clone();
    sgd_step_in_place(&mut next, grads, lr)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::Arch;

    #[test]
    fn cosine_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cosine_lr(0, &cfg).unwrap(), 0.001);
        assert!((cosine_lr(100, &cfg).unwrap() - 0.0).abs() < 1e-18);
        assert!((cosine_lr(50, &cfg).unwrap() - 0.0005).abs() < 1e-15);
        assert!(cosine_lr(101, &cfg).is_err());
        let lrs: Vec<f64> = (0..=100).map(|t| cosine_lr(t, &cfg).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        let cfg = TrainConfig {
            lr_min: 1e-5,
            epochs: 7,
            ..cfg
        };
        assert_eq!(cosine_lr(7, &cfg).unwrap(), 1e-5);
    }

    #[test]
    fn config_json_is_strict_and_defaulted() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.lr0, 0.001);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
        let bad = TrainConfig {
            pixel_drop: PixelDrop {
                apply_prob: 1.5,
                per_pixel_prob: 0.0,
            },
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        assert!(TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            lr0: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn sgd_definition() {
        let arch = Arch::classifier(16, 16);
        let p = ModelParams::<f64>::init(arch, 1).unwrap();
        let g: Vec<_> = p.tensors().iter().map(|t| t.map(|_| 2.0)).collect();
        assert_eq!(sgd_step(&p, &g, 0.0).unwrap(), p);
        let next = sgd_step(&p, &g, 0.1).unwrap();
        let (a, b) = (p.tensors()[0].data()[0], next.tensors()[0].data()[0]);
        assert!((a - 0.2 - b).abs() < 1e-15);
        assert!(matches!(sgd_step(&p, &g[1..], 0.1), Err(Error::Shape(_))));
    }

    #[test]
    fn sgd_descends_a_convex_quadratic() {
        // f(theta) = 0.5 * sum (theta - 1)^2 over the head bias.
        let arch = Arch::classifier(16, 16);
        let mut p = ModelParams::<f64>::zeros(arch).unwrap();
        let last = p.tensors().len() - 1;
        let loss = |p: &ModelParams<f64>| {
            p.tensors()[last]
                .data()
                .iter()
                .map(|v| 0.5 * (v - 1.0) * (v - 1.0))
                .sum::<f64>()
        };
        let mut prev = loss(&p);
        for _ in 0..50 {
            let mut g: Vec<_> = p.tensors().iter().map(|t| t.map(|_| 0.0)).collect();
            g[last] = p.tensors()[last].map(|v| v - 1.0);
            sgd_step_in_place(&mut p, &g, 0.1).unwrap();
            let now = loss(&p);
            assert!(now < prev);
            prev = now;
        }
    }
}
