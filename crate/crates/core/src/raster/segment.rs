//! Classical paper/background separation: Otsu on luma, keep the largest
//! bright 8-connected region, fill its holes.

use std::collections::VecDeque;

use super::{BinaryMask, Raster};
use crate::error::{Error, Result};
use crate::maskops::label_components;

/// Otsu's threshold over 256 luma bins. Pixels in bins strictly above the
/// returned bin form the bright class.
pub fn otsu_threshold(gray: &Raster) -> usize {
    let mut hist = [0u64; 256];
    for &v in gray.data() {
        hist[((v as f64) * 255.0 + 0.5).floor().clamp(0.0, 255.0) as usize] += 1;
    }
    let total = gray.data().len() as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &h)| i as f64 * h as f64)
        .sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_var) = (0usize, -1.0);
    for (t, &h) in hist.iter().enumerate() {
        w0 += h as f64;
        sum0 += t as f64 * h as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best_var {
            best_var = between;
            best = t;
        }
    }
    best
}

/// Sets every false pixel that cannot reach the border through 4-connected
/// false pixels. Complements the 8-connectivity used for foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed =
        |x: usize, y: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<(usize, usize)>| {
            let i = y * w + x;
            if !mask.bits()[i] && !outside[i] {
                outside[i] = true;
                queue.push_back((x, y));
            }
        };
    for x in 0..w {
        seed(x, 0, &mut outside, &mut queue);
        seed(x, h - 1, &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut queue);
        seed(w - 1, y, &mut outside, &mut queue);
    }
    while let Some((x, y)) = queue.pop_front() {
        if x > 0 {
            seed(x - 1, y, &mut outside, &mut queue);
        }
        if x + 1 < w {
            seed(x + 1, y, &mut outside, &mut queue);
        }
        if y > 0 {
            seed(x, y - 1, &mut outside, &mut queue);
        }
        if y + 1 < h {
            seed(x, y + 1, &mut outside, &mut queue);
        }
    }
    BinaryMask::new(w, h, outside.into_iter().map(|o| !o).collect()).expect("same dimensions")
}

/// Estimates the paper region of a photo taken against a darker background.
pub fn segment_background(r: &Raster) -> Result<BinaryMask> {
    let gray = r.to_grayscale();
    let t = otsu_threshold(&gray);
    let bits: Vec<bool> = gray
        .data()
        .iter()
        .map(|&v| ((v as f64) * 255.0 + 0.5).floor() as usize > t)
        .collect();
    let bright = BinaryMask::new(gray.width(), gray.height(), bits)?;
    // A single-level image has no split: Otsu reports bin 0 and either
    // everything or nothing lands on the bright side.
    if bright.count() == 0 || bright.count() == bright.bits().len() {
        return Err(Error::Segmentation(
            "no foreground after thresholding".into(),
        ));
    }
    let labeled = label_components(&bright);
    let areas = labeled.areas();
    // areas[0] is background; ties go to the earlier label.
    let (largest, _) = areas
        .iter()
        .enumerate()
        .skip(1)
        .fold(
            (0usize, 0usize),
            |best, (k, &a)| if a > best.1 { (k, a) } else { best },
        );
    let keep: Vec<bool> = labeled
        .labels()
        .iter()
        .map(|&l| l as usize == largest)
        .collect();
    Ok(fill_holes(&BinaryMask::new(
        gray.width(),
        gray.height(),
        keep,
    )?))
}
