use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nnkit::{classifier_head, Arch};

fn small_model(seed: u64) -> ModelParams {
    ModelParams::init(Arch::classifier(16, 32), seed).unwrap()
}

fn random_input(seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(vec![1, 1, 16, 32], (0..16 * 32).map(|_| rng.gen::<f32>()).collect()).unwrap()
}

fn head_index(p: &ModelParams) -> usize {
    p.tensors().len() - 2
}

#[test]
fn toy_closed_form() {
    // logit = mean(A) on one 2x2 channel: G = 1/4 everywhere.
    let a = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let g = Tensor::new(vec![1, 2, 2], vec![0.25; 4]).unwrap();
    let w = cam_weights(&a, &g).unwrap();
    assert!((w[0] - 2.5 / (10.0 + WEIGHT_EPS)).abs() < 1e-15);
    let map = cam_map(&a, &g).unwrap();
    for (m, a) in map.iter().zip(a.data()) {
        assert!((m / map[3] - a / 4.0).abs() < 1e-12);
    }
}

#[test]
fn negative_sum_is_rectified() {
    let a = Tensor::new(vec![1, 1, 2], vec![1.0, 3.0]).unwrap();
    let g = Tensor::new(vec![1, 1, 2], vec![-1.0, -1.0]).unwrap();
    assert_eq!(cam_map(&a, &g).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn heatmap_invariants() {
    let p = small_model(1);
    for class in ClassName::ALL {
        let h = xgradcam(&p, &random_input(7), class).unwrap();
        assert_eq!((h.width(), h.height()), (32, 16));
        assert_eq!(h.class(), class);
        let max = h.raster().data().iter().fold(0.0f32, |m, &v| m.max(v));
        assert!(h.is_zero() || max == 1.0);
        assert!(h.raster().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn activation_gradients_match_finite_differences() {
    let p = small_model(3);
    let p64 = p.cast::<f64>();
    let (a, g) = activations_and_grads(&p, &random_input(4), ClassName::Cd).unwrap();
    let logit = |act: &Tensor<f64>| {
        let s = act.shape();
        let t = act.clone().reshape(vec![1, s[0], s[1], s[2]]).unwrap();
        classifier_head(&p64, &t).unwrap().data()[ClassName::Cd.index()]
    };
    let h = 1e-6;
    let [_, ah, aw] = *a.shape() else { unreachable!() };
    // Max pooling follows the activation, so ties within a 2x2 window are
    // kinks; only points away from them are differentiable.
    let clear_of_ties = |i: usize| {
        let (c, y, x) = (i / (ah * aw), i / aw % ah, i % aw);
        let (y0, x0) = (y & !1, x & !1);
        [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|(dy, dx)| c * ah * aw + (y0 + dy) * aw + x0 + dx)
            .filter(|&j| j != i)
            .all(|j| (a.data()[j] - a.data()[i]).abs() > 1e-4)
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in (0..a.len()).filter(|&i| clear_of_ties(i)) {
        checked += 1;
        let mut up = a.clone();
        up.data_mut()[i] += h;
        let mut down = a.clone();
        down.data_mut()[i] -= h;
        let fd = (logit(&up) - logit(&down)) / (2.0 * h);
        let err = (fd - g.data()[i]).abs() / fd.abs().max(g.data()[i].abs()).max(1e-6);
        worst = worst.max(err);
    }
    assert!(checked >= 20, "only {checked} differentiable points");
    assert!(worst < 1e-3, "max relative error {worst}");
}

#[test]
fn invariant_to_scaling_the_class_head() {
    let p = small_model(5);
    let x = random_input(6);
    let class = ClassName::Hyp;
    let before = xgradcam(&p, &x, class).unwrap();
    let mut scaled = p.clone();
    let head = head_index(&p);
    let c = class.index();
    let fan_in = scaled.tensors()[head].shape()[1];
    for v in &mut scaled.tensors_mut()[head].data_mut()[c * fan_in..(c + 1) * fan_in] {
        *v *= 3.5;
    }
    scaled.tensors_mut()[head + 1].data_mut()[c] *= 3.5;
    let after = xgradcam(&scaled, &x, class).unwrap();
    for (a, b) in before.raster().data().iter().zip(after.raster().data()) {
        assert!((a - b).abs() <= 1e-6);
    }
}

#[test]
fn zero_dependence_gives_zero_map() {
    let mut p = small_model(8);
    let head = head_index(&p);
    let c = ClassName::Af.index();
    let fan_in = p.tensors()[head].shape()[1];
    p.tensors_mut()[head].data_mut()[c * fan_in..(c + 1) * fan_in].fill(0.0);
    let h = xgradcam(&p, &random_input(9), ClassName::Af).unwrap();
    assert!(h.is_zero());
}

#[test]
fn accepts_input_without_batch_axis() {
    let p = small_model(2);
    let x = random_input(2);
    let flat = x.clone().reshape(vec![1, 16, 32]).unwrap();
    assert_eq!(
        xgradcam(&p, &x, ClassName::Mi).unwrap(),
        xgradcam(&p, &flat, ClassName::Mi).unwrap()
    );
}

#[test]
fn rejects_segmenter_and_wrong_input() {
    let seg = ModelParams::init(Arch::segmenter(16, 32), 0).unwrap();
    assert!(matches!(
        xgradcam(&seg, &random_input(0), ClassName::Mi),
        Err(Error::Compatibility(_))
    ));
    let wrong = Tensor::zeros(vec![1, 1, 8, 8]);
    assert!(matches!(
        xgradcam(&small_model(0), &wrong, ClassName::Mi),
        Err(Error::Compatibility(_))
    ));
}

#[test]
fn overlay_edge_cases() {
    let base = Raster::new(3, 2, 1, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
    let heat = Heatmap::new(Raster::filled(3, 2, 1, 0.0).unwrap(), ClassName::Mi).unwrap();
    let gray = overlay(&base, &heat, 0.0).unwrap();
    assert_eq!(gray, base.to_rgb());
    let full = overlay(&base, &heat, 1.0).unwrap();
    for px in full.data().chunks(3) {
        assert_eq!(px, RAMP[0]);
    }
    let small = Heatmap::new(Raster::filled(2, 2, 1, 0.0).unwrap(), ClassName::Mi).unwrap();
    assert!(matches!(overlay(&base, &small, 0.5), Err(Error::Shape(_))));
    assert!(matches!(overlay(&base, &heat, 1.5), Err(Error::Parameter(_))));
}

#[test]
fn ramp_hits_stops() {
    for (i, stop) in RAMP.iter().enumerate() {
        assert_eq!(ramp(i as f32 / 4.0), *stop);
    }
}

#[test]
fn heatmap_rejects_bad_values() {
    let r = Raster::new(2, 1, 1, vec![0.5, 0.25]).unwrap();
    assert!(Heatmap::new(r, ClassName::Mi).is_err());
}

proptest! {
    #[test]
    fn overlay_is_pointwise_convex(
        base in prop::collection::vec(0.0f32..=1.0, 12),
        heat in prop::collection::vec(0.0f32..=1.0, 12),
        alpha in 0.0f64..=1.0,
    ) {
        let mut heat = heat;
        heat[0] = 1.0;
        let b = Raster::new(4, 3, 1, base.clone()).unwrap();
        let h = Heatmap::new(Raster::new(4, 3, 1, heat.clone()).unwrap(), ClassName::Sttc).unwrap();
        let out = overlay(&b, &h, alpha).unwrap();
        for (i, px) in out.data().chunks(3).enumerate() {
            let color = ramp(heat[i]);
            for c in 0..3 {
                let (lo, hi) = (base[i].min(color[c]), base[i].max(color[c]));
                prop_assert!(px[c] >= lo - 1e-6 && px[c] <= hi + 1e-6);
            }
        }
    }
}
