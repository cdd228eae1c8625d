//! Logit ensembles and end-to-end evaluation.

use super::inputs::PreparedSet;
use super::metrics::{metrics_report, MetricsReport};
use super::{PerClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nnkit::{model_forward, sigmoid, Mode, ModelParams, Tensor};

fn check_members(models: &[ModelParams]) -> Result<()> {
    let first = models
        .first()
        .ok_or_else(|| Error::Parameter("empty ensemble".into()))?;
    if !first.arch().is_classifier() {
        return Err(Error::Compatibility(
            "ensemble members must be classifiers".into(),
        ));
    }
    if let Some((i, _)) = models
        .iter()
        .enumerate()
        .find(|(_, m)| m.arch() != first.arch())
    {
        return Err(Error::Compatibility(format!(
            "member {i} has descriptor {:?}, member 0 has {:?}",
            models[i].arch(),
            first.arch()
        )));
    }
    Ok(())
}

/// Arithmetic mean of the members' logits, `[N, 5]` for an `[N, 1, H, W]`
/// input.
pub fn ensemble_logits(models: &[ModelParams], input: &Tensor) -> Result<Tensor> {
    check_members(models)?;
    let mut sum: Vec<f64> = Vec::new();
    for m in models {
        let (logits, _) = model_forward(m, input, Mode::Eval)?;
        if sum.is_empty() {
            sum = vec![0.0; logits.len()];
        }
        for (s, &v) in sum.iter_mut().zip(logits.data()) {
            *s += v as f64;
        }
    }
    let k = models.len() as f64;
    let n = input.shape()[0];
    Tensor::new(
        vec![n, NUM_CLASSES],
        sum.into_iter().map(|s| (s / k) as f32).collect(),
    )
}

/// Ensemble logits for every sample of a prepared set.
pub fn predict_logits(models: &[ModelParams], data: &PreparedSet) -> Result<Vec<PerClass<f64>>> {
    check_members(models)?;
    let (h, w) = (data.dims.height, data.dims.width);
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.inputs.chunks(64) {
        let x = Tensor::from_parts(vec![chunk.len(), 1, h, w], chunk.concat());
        let z = ensemble_logits(models, &x)?;
        out.extend(
            z.data()
                .chunks(NUM_CLASSES)
                .map(|r| PerClass(std::array::from_fn(|c| r[c] as f64))),
        );
    }
    Ok(out)
}

pub fn predict_probs(models: &[ModelParams], data: &PreparedSet) -> Result<Vec<PerClass<f64>>> {
    Ok(predict_logits(models, data)?
        .iter()
        .map(|z| z.map(|&v| sigmoid(v)))
        .collect())
}

/// Ensemble, sigmoid, then AUROC on probabilities and F1 after
/// thresholding.
pub fn evaluate(
    models: &[ModelParams],
    data: &PreparedSet,
    t: &PerClass<f64>,
) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::Parameter(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    metrics_report(&predict_probs(models, data)?, &data.labels(), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::Arch;

    /// A classifier whose logits are exactly its head bias.
    fn bias_model(bias: [f32; NUM_CLASSES]) -> ModelParams {
        let mut p = ModelParams::zeros(Arch::classifier(16, 16)).unwrap();
        let last = p.tensors().len() - 1;
        p.tensors_mut()[last].data_mut().copy_from_slice(&bias);
        p
    }

    #[test]
    fn mean_of_logits() {
        let ms = [
            bias_model([1.0, -1.0, 0.0, 0.0, 2.0]),
            bias_model([0.0, 0.0, 0.0, 0.0, 2.0]),
            bias_model([2.0, 2.0, 0.0, 0.0, 2.0]),
        ];
        let x = Tensor::zeros(vec![2, 1, 16, 16]);
        let z = ensemble_logits(&ms, &x).unwrap();
        let want = [1.0, 1.0 / 3.0, 0.0, 0.0, 2.0];
        for row in z.data().chunks(5) {
            for (a, b) in row.iter().zip(want) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        let single = ensemble_logits(&ms[..1], &x).unwrap();
        assert_eq!(&single.data()[..5], &[1.0, -1.0, 0.0, 0.0, 2.0]);
        let rev: Vec<_> = ms.iter().rev().cloned().collect();
        assert_eq!(ensemble_logits(&rev, &x).unwrap(), z);
    }

    #[test]
    fn identical_members_match_one() {
        let p = ModelParams::init(Arch::classifier(16, 16), 3).unwrap();
        let x = Tensor::new(
            vec![1, 1, 16, 16],
            (0..256).map(|i| (i % 13) as f32 / 13.0).collect(),
        )
        .unwrap();
        let one = ensemble_logits(std::slice::from_ref(&p), &x).unwrap();
        let three = ensemble_logits(&[p.clone(), p.clone(), p], &x).unwrap();
        for (a, b) in one.data().iter().zip(three.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn descriptor_mismatch_is_incompatible() {
        let a = ModelParams::init(Arch::classifier(16, 16), 0).unwrap();
        let b = ModelParams::init(Arch::classifier(32, 32), 0).unwrap();
        let x = Tensor::zeros(vec![1, 1, 16, 16]);
        assert!(matches!(
            ensemble_logits(&[a.clone(), b], &x),
            Err(Error::Compatibility(_))
        ));
        let s = ModelParams::init(Arch::segmenter(16, 16), 0).unwrap();
        assert!(matches!(
            ensemble_logits(&[s], &x),
            Err(Error::Compatibility(_))
        ));
        assert!(ensemble_logits(&[], &x).is_err());
    }
}
