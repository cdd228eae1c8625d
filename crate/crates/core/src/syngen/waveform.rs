//! Parametric 12-lead beat model.
//!
//! Each beat is a sum of Gaussian bumps (P, Q, R, S, T) placed around its R
//! time, scaled per lead. Labels switch the morphology:
//!
//! | label | change                                                        |
//! |-------|---------------------------------------------------------------|
//! | MI    | Q bump deepened to -0.5 mV and a +0.25 mV ST plateau          |
//! | STTC  | T bump amplitude negated                                      |
//! | CD    | Q, R, S widths and offsets scaled by 1.8                      |
//! | HYP   | R and S amplitudes scaled by 1.7                              |
//! | AF    | no P bump; RR intervals with a coefficient of variation 0.35  |

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::pipeline::{ClassName, PerClass};

pub const LEAD_NAMES: [&str; 12] = ["I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"];

/// Record length in seconds: four printed columns of 2 s.
pub const RECORD_SECONDS: f64 = 8.0;

pub const QRS_WIDEN: f64 = 1.8;
pub const HYP_GAIN: f64 = 1.7;
pub const AF_CV: f64 = 0.35;

/// Per-lead gains for the P, QRS and T (and ST) parts.
const LEAD_GAINS: [[f64; 3]; 12] = [
    [0.8, 0.8, 0.8],
    [1.0, 1.0, 1.0],
    [0.5, 0.6, 0.5],
    [-0.8, -0.8, -0.8],
    [0.4, 0.5, 0.4],
    [0.7, 0.8, 0.7],
    [0.6, -0.6, 0.5],
    [0.6, 0.7, 0.9],
    [0.6, 0.9, 1.0],
    [0.7, 1.1, 1.0],
    [0.7, 1.0, 0.9],
    [0.6, 0.8, 0.8],
];

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bump {
    amp: f64,
    offset: f64,
    sigma: f64,
}

impl Bump {
    fn at(&self, dt: f64) -> f64 {
        let z = (dt - self.offset) / self.sigma;
        self.amp * (-0.5 * z * z).exp()
    }
}

/// Beat shape shared by every beat of a record, before lead gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatShape {
    p: Option<Bump>,
    q: Bump,
    r: Bump,
    s: Bump,
    t: Bump,
    /// ST plateau height in mV (0 when absent) and its extent after R.
    st: (f64, f64, f64),
}

impl BeatShape {
    fn new(labels: &PerClass<u8>, amp: f64) -> Self {
        let on = |c: ClassName| labels[c] == 1;
        let w = if on(ClassName::Cd) { QRS_WIDEN } else { 1.0 };
        let g = if on(ClassName::Hyp) { HYP_GAIN } else { 1.0 };
        let q_amp = if on(ClassName::Mi) { -0.5 } else { -0.12 };
        let t_amp = if on(ClassName::Sttc) { -0.35 } else { 0.35 };
        Self {
            p: (!on(ClassName::Af)).then_some(Bump { amp: 0.25 * amp, offset: -0.17, sigma: 0.022 }),
            q: Bump { amp: q_amp * amp, offset: -0.032 * w, sigma: 0.010 * w },
            r: Bump { amp: 1.1 * g * amp, offset: 0.0, sigma: 0.012 * w },
            s: Bump { amp: -0.3 * g * amp, offset: 0.032 * w, sigma: 0.012 * w },
            t: Bump { amp: t_amp * amp, offset: 0.30, sigma: 0.05 },
            st: (if on(ClassName::Mi) { 0.25 * amp } else { 0.0 }, 0.05 * w, 0.26),
        }
    }

    /// Signal of one beat at `dt` seconds from its R peak, for a lead.
    fn value(&self, dt: f64, gains: &[f64; 3]) -> f64 {
        if !(-0.4..0.7).contains(&dt) {
            return 0.0;
        }
        let p = self.p.map_or(0.0, |b| b.at(dt));
        let qrs = self.q.at(dt) + self.r.at(dt) + self.s.at(dt);
        let (h, a, b) = self.st;
        let st = if h == 0.0 { 0.0 } else { h * logistic((dt - a) / 0.008) * logistic((b - dt) / 0.02) };
        gains[0] * p + gains[1] * qrs + gains[2] * (self.t.at(dt) + st)
    }

    /// Half-height width of the R bump, seconds.
    pub fn r_fwhm(&self) -> f64 {
        2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * self.r.sigma
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// A generated record: beat times and shape, evaluable at any time, plus a
/// uniformly sampled copy of every lead.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveforms {
    pub fs: f64,
    /// `leads[l][k]` is lead `l` at time `k / fs`, in mV.
    pub leads: Vec<Vec<f64>>,
    /// R-peak times in seconds, possibly slightly outside the record.
    pub beats: Vec<f64>,
    pub shape: BeatShape,
}

impl Waveforms {
    /// Lead `lead` at time `t` seconds.
    pub fn value(&self, lead: usize, t: f64) -> f64 {
        let gains = &LEAD_GAINS[lead];
        self.beats.iter().map(|&r| self.shape.value(t - r, gains)).sum()
    }
}

/// Sampling rate of [`Waveforms::leads`].
pub const SAMPLE_RATE: f64 = 500.0;

/// RR multipliers with mean exactly 1 and standard deviation `cv`, kept
/// away from zero.
fn irregular_factors(k: usize, cv: f64, rng: &mut impl Rng) -> Vec<f64> {
    let standardize = |z: &mut Vec<f64>| {
        let m = z.iter().sum::<f64>() / z.len() as f64;
        z.iter_mut().for_each(|v| *v -= m);
        let sd = (z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64).sqrt();
        if sd > 0.0 {
            z.iter_mut().for_each(|v| *v /= sd);
        }
    };
    let mut z: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    standardize(&mut z);
    z.iter_mut().for_each(|v| *v = v.clamp(-1.6, 1.6));
    standardize(&mut z);
    z.into_iter().map(|v| 1.0 + cv * v).collect()
}

pub fn gen_waveforms(labels: &PerClass<u8>, rng: &mut impl Rng) -> Waveforms {
    let amp = rng.gen_range(0.85..1.15);
    let shape = BeatShape::new(labels, amp);
    let bpm = rng.gen_range(55.0..85.0);
    let rr = 60.0 / bpm;
    // Beats inside the record get the label's rhythm statistics exactly;
    // one extra beat on each side keeps the edges populated.
    let t0 = rng.gen_range(0.05..0.05 + 0.5 * rr);
    let k = ((RECORD_SECONDS - 0.05 - t0) / rr).floor() as usize;
    let factors = if labels[ClassName::Af] == 1 {
        irregular_factors(k, AF_CV, rng)
    } else {
        let jitter = Normal::new(0.0, 0.02).expect("valid normal");
        (0..k).map(|_| 1.0 + jitter.sample(rng)).collect()
    };
    let mut beats = Vec::with_capacity(k + 3);
    beats.push(t0 - rr);
    let mut t = t0;
    beats.push(t);
    for f in factors {
        t += rr * f;
        beats.push(t);
    }
    beats.push(t + rr);
    let mut w = Waveforms { fs: SAMPLE_RATE, leads: Vec::new(), beats, shape };
    let n = (RECORD_SECONDS * SAMPLE_RATE) as usize;
    w.leads = (0..12).map(|l| (0..n).map(|i| w.value(l, i as f64 / SAMPLE_RATE)).collect()).collect();
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::rng::sample_rng;

    fn labels(v: [u8; 5]) -> PerClass<u8> {
        PerClass(v)
    }

    /// R peaks of lead II found as local maxima above half the tallest.
    fn detect_peaks(x: &[f64]) -> Vec<usize> {
        let top = x.iter().cloned().fold(f64::MIN, f64::max);
        (1..x.len() - 1).filter(|&i| x[i] > 0.5 * top && x[i] >= x[i - 1] && x[i] > x[i + 1]).collect()
    }

    fn cv(peaks: &[usize]) -> f64 {
        let iv: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
        let m = iv.iter().sum::<f64>() / iv.len() as f64;
        let var = iv.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (iv.len() - 1) as f64;
        var.sqrt() / m
    }

    fn p_window_energy(w: &Waveforms) -> f64 {
        let lead = &w.leads[1];
        let mut e = 0.0;
        for pair in w.beats.windows(2) {
            let (prev, r) = (pair[0], pair[1]);
            if r - prev < 0.7 || r - 0.25 < 0.0 || r >= RECORD_SECONDS {
                continue;
            }
            let (a, b) = (((r - 0.23) * w.fs) as usize, ((r - 0.11) * w.fs) as usize);
            e += lead[a..b].iter().map(|v| v * v).sum::<f64>() / w.fs;
        }
        e
    }

    #[test]
    fn baseline_is_deterministic_with_p_waves() {
        let a = gen_waveforms(&labels([0; 5]), &mut sample_rng(4, 0));
        let b = gen_waveforms(&labels([0; 5]), &mut sample_rng(4, 0));
        assert_eq!(a, b);
        assert_eq!(a.leads.len(), 12);
        assert!(a.shape.p.is_some());
        assert!(p_window_energy(&a) > 1e-3);
    }

    #[test]
    fn af_is_irregular_without_p_waves() {
        for seed in 0..40 {
            let w = gen_waveforms(&labels([0, 0, 0, 0, 1]), &mut sample_rng(seed, 1));
            let peaks = detect_peaks(&w.leads[1]);
            assert!(peaks.len() >= 5, "seed {seed}");
            assert!(cv(&peaks) >= 0.25, "seed {seed}: cv {}", cv(&peaks));
            assert!(p_window_energy(&w) < 1e-6, "seed {seed}: {}", p_window_energy(&w));
            let sinus = gen_waveforms(&labels([0; 5]), &mut sample_rng(seed, 1));
            assert!(cv(&detect_peaks(&sinus.leads[1])) < 0.1);
        }
    }

    /// Width of the R complex of lead II at half its height, from samples.
    fn measured_qrs_width(w: &Waveforms) -> f64 {
        let x = &w.leads[1];
        let peaks = detect_peaks(x);
        let widths: Vec<f64> = peaks
            .iter()
            .filter(|&&p| p > 100 && p + 100 < x.len())
            .map(|&p| {
                let half = x[p] / 2.0;
                let (mut l, mut r) = (p, p);
                while x[l] > half {
                    l -= 1;
                }
                while x[r] > half {
                    r += 1;
                }
                (r - l) as f64 / w.fs
            })
            .collect();
        widths.iter().sum::<f64>() / widths.len() as f64
    }

    #[test]
    fn cd_widens_qrs() {
        for seed in 0..10 {
            let narrow = gen_waveforms(&labels([0; 5]), &mut sample_rng(seed, 2));
            let wide = gen_waveforms(&labels([0, 0, 1, 0, 0]), &mut sample_rng(seed, 2));
            let ratio = measured_qrs_width(&wide) / measured_qrs_width(&narrow);
            assert!((ratio - 1.8).abs() <= 0.2, "seed {seed}: {ratio}");
            assert!((wide.shape.r_fwhm() / narrow.shape.r_fwhm() - 1.8).abs() < 1e-12);
        }
    }

    #[test]
    fn hyp_raises_and_sttc_inverts() {
        let base = gen_waveforms(&labels([0; 5]), &mut sample_rng(1, 3));
        let hyp = gen_waveforms(&labels([0, 0, 0, 1, 0]), &mut sample_rng(1, 3));
        let top = |w: &Waveforms| w.leads[1].iter().cloned().fold(f64::MIN, f64::max);
        assert!(top(&hyp) / top(&base) > 1.5);
        let sttc = gen_waveforms(&labels([0, 1, 0, 0, 0]), &mut sample_rng(1, 3));
        assert!(sttc.shape.t.amp < 0.0 && base.shape.t.amp > 0.0);
        let mi = gen_waveforms(&labels([1, 0, 0, 0, 0]), &mut sample_rng(1, 3));
        assert!(mi.shape.st.0 > 0.0 && mi.shape.q.amp < base.shape.q.amp);
    }
}
