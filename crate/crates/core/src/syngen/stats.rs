//! Dataset-level statistics: label frequencies and learnability of the
//! labels from simple waveform measurements.

use super::*;
use crate::pipeline::{auroc, NUM_CLASSES};

fn records(cfg: &GenConfig, n: usize) -> Vec<(PerClass<u8>, Waveforms)> {
    (0..n).map(|i| draw_record(cfg, &mut sample_rng(cfg.seed, i))).collect()
}

#[test]
fn label_frequencies_match_priors() {
    let cfg = GenConfig { seed: 21, ..GenConfig::default() };
    let n = 2000;
    let mut counts = [0usize; NUM_CLASSES];
    for i in 0..n {
        let mut rng = sample_rng(cfg.seed, i);
        let labels = PerClass(std::array::from_fn(|c| u8::from(rng.gen_bool(cfg.class_priors.0[c]))));
        // The shortcut above must draw what samples carry.
        if i < 20 {
            assert_eq!(labels, draw_record(&cfg, &mut sample_rng(cfg.seed, i)).0);
        }
        for (k, &l) in counts.iter_mut().zip(&labels.0) {
            *k += l as usize;
        }
    }
    for (c, &k) in counts.iter().enumerate() {
        let p = cfg.class_priors.0[c];
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let dev = (k as f64 - n as f64 * p).abs();
        assert!(dev <= 3.0 * sigma, "class {c}: {k} of {n}, prior {p}");
    }
}

/// R peaks of lead II: local maxima above half the tallest sample.
fn r_peaks(x: &[f64]) -> Vec<usize> {
    let top = x.iter().cloned().fold(f64::MIN, f64::max);
    (1..x.len() - 1)
        .filter(|&i| x[i] > 0.5 * top && x[i] >= x[i - 1] && x[i] > x[i + 1])
        .collect()
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0.0), |(s, n), x| (s + x, n + 1.0));
    s / n
}

/// QRS width, R height, Q depth, ST offset, T level, P energy and RR
/// coefficient of variation, all measured on the sampled lead II.
fn features(w: &Waveforms) -> Vec<f64> {
    let x = &w.leads[1];
    let at = |s: f64| (s * w.fs).round() as isize;
    let window = |p: usize, a: f64, b: f64| {
        let (lo, hi) = (p as isize + at(a), p as isize + at(b));
        (lo.max(0) as usize..(hi.max(0) as usize).min(x.len())).map(|i| x[i])
    };
    let peaks = r_peaks(x);
    let inner: Vec<usize> = peaks
        .iter()
        .copied()
        .filter(|&p| p as isize >= at(0.3) && p as isize + at(0.4) < x.len() as isize)
        .collect();
    let width = mean(inner.iter().map(|&p| {
        let half = 0.5 * x[p];
        let left = (0..p).rev().take_while(|&i| x[i] > half).count();
        let right = (p + 1..x.len()).take_while(|&i| x[i] > half).count();
        (left + right + 1) as f64 / w.fs
    }));
    let height = mean(inner.iter().map(|&p| x[p]));
    let q = mean(inner.iter().map(|&p| window(p, -0.09, 0.0).fold(f64::MAX, f64::min)));
    let st = mean(inner.iter().map(|&p| mean(window(p, 0.12, 0.18))));
    let t = mean(inner.iter().map(|&p| mean(window(p, 0.26, 0.34))));
    let p_energy = mean(inner.iter().map(|&p| mean(window(p, -0.23, -0.11).map(|v| v * v))));
    let rr: Vec<f64> = peaks.windows(2).map(|p| (p[1] - p[0]) as f64).collect();
    let rr_mean = mean(rr.iter().copied());
    let rr_cv = mean(rr.iter().map(|v| (v - rr_mean).powi(2))).sqrt() / rr_mean;
    vec![width, height, q, st, t, p_energy, rr_cv]
}

/// Plain logistic regression by full-batch gradient descent on
/// standardized features; returns weights with the bias last.
fn fit_logistic(xs: &[Vec<f64>], ys: &[u8]) -> Vec<f64> {
    let d = xs[0].len();
    let mut w = vec![0.0; d + 1];
    for _ in 0..2000 {
        let mut g = vec![0.0; d + 1];
        for (x, &y) in xs.iter().zip(ys) {
            let z = w[d] + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let err = 1.0 / (1.0 + (-z).exp()) - y as f64;
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += err * xi;
            }
            g[d] += err;
        }
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= 0.5 * gi / xs.len() as f64;
        }
    }
    w
}

#[test]
fn labels_are_learnable_from_waveform_features() {
    let cfg = GenConfig { seed: 5, ..GenConfig::default() };
    let data = records(&cfg, 1000);
    let mut xs: Vec<Vec<f64>> = data.iter().map(|(_, w)| features(w)).collect();
    let d = xs[0].len();
    for j in 0..d {
        let m = mean(xs.iter().map(|x| x[j]));
        let sd = mean(xs.iter().map(|x| (x[j] - m).powi(2))).sqrt().max(1e-12);
        xs.iter_mut().for_each(|x| x[j] = (x[j] - m) / sd);
    }
    let (train, test) = xs.split_at(700);
    for c in 0..NUM_CLASSES {
        let ys: Vec<u8> = data.iter().map(|(l, _)| l.0[c]).collect();
        let w = fit_logistic(train, &ys[..700]);
        let scores: Vec<f64> = test
            .iter()
            .map(|x| w[d] + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let a = auroc(&scores, &ys[700..]).unwrap();
        assert!(a >= 0.9, "class {c}: held-out AUROC {a:.3}");
    }
}
