//! AUROC, F1, threshold fitting and the evaluation report.

use log::warn;
use serde::{Deserialize, Serialize};

use super::{PerClass, CLASS_NAMES, NUM_CLASSES};
use crate::error::{Error, Result};

fn check_aligned(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {a} scores for {b} labels")));
    }
    Ok(())
}

fn check_binary(labels: &[u8]) -> Result<()> {
    if let Some(v) = labels.iter().find(|&&v| v > 1) {
        return Err(Error::Data(format!("label {v} is not 0 or 1")));
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from mid-ranks in `O(n log n)`.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_aligned(scores.len(), labels.len(), "auroc")?;
    check_binary(labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Parameter("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUROC needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += mid * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// `2 TP / (2 TP + FP + FN)`, or 0 when nothing is positive on either side.
pub fn f1(preds: &[u8], labels: &[u8]) -> Result<f64> {
    check_aligned(preds.len(), labels.len(), "f1")?;
    check_binary(preds)?;
    check_binary(labels)?;
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fnn += 1,
            _ => {}
        }
    }
    let den = 2 * tp + fp + fnn;
    Ok(if den == 0 {
        0.0
    } else {
        2.0 * tp as f64 / den as f64
    })
}

/// 1 where `prob > threshold`, strictly.
pub fn binarize(probs: &PerClass<f64>, t: &PerClass<f64>) -> PerClass<u8> {
    PerClass(std::array::from_fn(|c| u8::from(probs.0[c] > t.0[c])))
}

/// Candidate thresholds `0.00, 0.01, ..., 1.00`.
pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (0..=100).map(|k| k as f64 / 100.0)
}

fn column<T: Copy>(rows: &[PerClass<T>], c: usize) -> Vec<T> {
    rows.iter().map(|r| r.0[c]).collect()
}

fn f1_at(probs: &[f64], labels: &[u8], t: f64) -> f64 {
    let preds: Vec<u8> = probs.iter().map(|&p| u8::from(p > t)).collect();
    f1(&preds, labels).expect("aligned binary inputs")
}

/// Per class, the smallest grid threshold that maximizes F1 on the given
/// data.
pub fn fit_thresholds(probs: &[PerClass<f64>], labels: &[PerClass<u8>]) -> Result<PerClass<f64>> {
    check_aligned(probs.len(), labels.len(), "fit_thresholds")?;
    if probs.is_empty() {
        return Err(Error::Parameter(
            "cannot fit thresholds on no samples".into(),
        ));
    }
    for l in labels {
        check_binary(&l.0)?;
    }
    let mut out = [0.0; NUM_CLASSES];
    for (c, slot) in out.iter_mut().enumerate() {
        let (p, l) = (column(probs, c), column(labels, c));
        let mut best = (f64::NEG_INFINITY, 0.0);
        for t in threshold_grid() {
            let score = f1_at(&p, &l, t);
            if score > best.0 {
                best = (score, t);
            }
        }
        *slot = best.1;
    }
    Ok(PerClass(out))
}

/// Per-class F1 of `binarize(probs, t)` against `labels`.
pub fn per_class_f1(
    probs: &[PerClass<f64>],
    labels: &[PerClass<u8>],
    t: &PerClass<f64>,
) -> Result<PerClass<f64>> {
    check_aligned(probs.len(), labels.len(), "per_class_f1")?;
    let mut out = [0.0; NUM_CLASSES];
    for (c, slot) in out.iter_mut().enumerate() {
        *slot = f1_at(&column(probs, c), &column(labels, c), t.0[c]);
    }
    Ok(PerClass(out))
}

/// Evaluation summary. A class whose labels are all equal has no AUROC; it
/// is reported as `null` and left out of the macro mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub macro_auroc: f64,
    pub per_class_auroc: PerClass<Option<f64>>,
    pub macro_f1: f64,
    pub per_class_f1: PerClass<f64>,
    pub thresholds: PerClass<f64>,
    pub n_samples: usize,
}

/// Builds the report from probabilities (or any monotone score) and labels.
pub fn metrics_report(
    probs: &[PerClass<f64>],
    labels: &[PerClass<u8>],
    t: &PerClass<f64>,
) -> Result<MetricsReport> {
    check_aligned(probs.len(), labels.len(), "metrics_report")?;
    if probs.is_empty() {
        return Err(Error::Parameter("cannot evaluate on no samples".into()));
    }
    let mut aucs = [None; NUM_CLASSES];
    for (c, slot) in aucs.iter_mut().enumerate() {
        match auroc(&column(probs, c), &column(labels, c)) {
            Ok(v) => *slot = Some(v),
            Err(Error::UndefinedMetric(why)) => warn!("{}: AUROC absent: {why}", CLASS_NAMES[c]),
            Err(e) => return Err(e),
        }
    }
    let defined: Vec<f64> = aucs.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedMetric(
            "no class has both positive and negative samples".into(),
        ));
    }
    let f1s = per_class_f1(probs, labels, t)?;
    Ok(MetricsReport {
        macro_auroc: defined.iter().sum::<f64>() / defined.len() as f64,
        per_class_auroc: PerClass(aucs),
        macro_f1: f1s.iter().sum::<f64>() / NUM_CLASSES as f64,
        per_class_f1: f1s,
        thresholds: *t,
        n_samples: probs.len(),
    })
}
