//! Post-processing for predicted trace masks.
//!
//! Labeling is a classic two-pass union-find over 8-connectivity: the first
//! pass assigns provisional labels and records equivalences with the already
//! visited neighbours (W, NW, N, NE), the second pass resolves each pixel to
//! its root and renumbers roots in raster order of their first pixel.

use crate::raster::BinaryMask;

pub const DEFAULT_WINDOW_H: usize = 10;
pub const DEFAULT_MIN_AREA: usize = 20;

/// Per-pixel component labels; 0 is background, components are `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledMask {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl LabeledMask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_components(&self) -> usize {
        self.count
    }

    /// Pixel count per label, index 0 being the background.
    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0usize; self.count + 1];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }
}

/// Zeroes every horizontal band of `window_h` rows that holds no true pixel.
/// The last band may be shorter. A zero window height is treated as 1.
pub fn sliding_window_filter(m: &BinaryMask, window_h: usize) -> BinaryMask {
    let window_h = window_h.max(1);
    let w = m.width();
    let mut out = m.clone();
    for y0 in (0..m.height()).step_by(window_h) {
        let y1 = (y0 + window_h).min(m.height());
        let band = y0 * w..y1 * w;
        if !m.bits()[band.clone()].iter().any(|&b| b) {
            out.bits_mut()[band].iter_mut().for_each(|b| *b = false);
        }
    }
    out
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

pub fn label_components(m: &BinaryMask) -> LabeledMask {
    let (w, h) = (m.width(), m.height());
    let mut provisional = vec![0u32; w * h];
    // Slot 0 is reserved for background.
    let mut sets = DisjointSet { parent: vec![0] };

    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            let mut label = 0u32;
            let mut visit = |nx: usize, ny: usize, label: &mut u32| {
                let l = provisional[ny * w + nx];
                if l != 0 {
                    *label = if *label == 0 {
                        l
                    } else {
                        sets.union(*label, l)
                    };
                }
            };
            if x > 0 {
                visit(x - 1, y, &mut label);
            }
            if y > 0 {
                if x > 0 {
                    visit(x - 1, y - 1, &mut label);
                }
                visit(x, y - 1, &mut label);
                if x + 1 < w {
                    visit(x + 1, y - 1, &mut label);
                }
            }
            provisional[y * w + x] = if label == 0 { sets.make() } else { label };
        }
    }

    let mut final_of_root = vec![0u32; sets.parent.len()];
    let mut count = 0u32;
    let labels = provisional
        .iter()
        .map(|&l| {
            if l == 0 {
                return 0;
            }
            let root = sets.find(l) as usize;
            if final_of_root[root] == 0 {
                count += 1;
                final_of_root[root] = count;
            }
            final_of_root[root]
        })
        .collect();
    LabeledMask {
        width: w,
        height: h,
        labels,
        count: count as usize,
    }
}

/// Keeps the pixels of components whose area is at least `min_area`.
pub fn filter_components(lm: &LabeledMask, min_area: usize) -> BinaryMask {
    let areas = lm.areas();
    let bits = lm
        .labels
        .iter()
        .map(|&l| l != 0 && areas[l as usize] >= min_area)
        .collect();
    BinaryMask::new(lm.width, lm.height, bits).expect("labels match dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn mask(w: usize, h: usize, on: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::empty(w, h);
        for &(x, y) in on {
            m.set(x, y, true);
        }
        m
    }

    /// Breadth-first flood fill labeling in raster order of seeds.
    fn flood_labels(m: &BinaryMask) -> Vec<u32> {
        let (w, h) = (m.width() as isize, m.height() as isize);
        let mut labels = vec![0u32; m.bits().len()];
        let mut next = 0;
        for start in 0..labels.len() {
            if !m.bits()[start] || labels[start] != 0 {
                continue;
            }
            next += 1;
            labels[start] = next;
            let mut q = VecDeque::from([start]);
            while let Some(i) = q.pop_front() {
                let (x, y) = ((i as isize) % w, (i as isize) / w);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let j = (ny * w + nx) as usize;
                        if m.bits()[j] && labels[j] == 0 {
                            labels[j] = next;
                            q.push_back(j);
                        }
                    }
                }
            }
        }
        labels
    }

    fn lcg_mask(seed: u64, w: usize, h: usize, density: f64) -> BinaryMask {
        let mut s = seed;
        let bits = (0..w * h)
            .map(|_| {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) < density
            })
            .collect();
        BinaryMask::new(w, h, bits).unwrap()
    }

    #[test]
    fn window_filter_examples() {
        assert_eq!(
            sliding_window_filter(&BinaryMask::empty(5, 30), 10),
            BinaryMask::empty(5, 30)
        );
        let m = mask(4, 30, &[(1, 0), (2, 9), (3, 15)]);
        // Band 10..20 holds (3, 15) so it survives; band 20..30 is already empty.
        assert_eq!(sliding_window_filter(&m, 10), m);
        let only_top = mask(4, 30, &[(1, 0), (2, 9)]);
        let out = sliding_window_filter(&only_top, 10);
        assert_eq!(out, only_top);
        let m = mask(6, 12, &[(0, 3), (5, 11)]);
        assert_eq!(sliding_window_filter(&m, 12), m);
    }

    #[test]
    fn window_filter_zeroes_only_empty_bands() {
        // The filter is band-wise keep-or-zero; a band with signal is verbatim.
        let m = lcg_mask(7, 16, 33, 0.02);
        let out = sliding_window_filter(&m, 5);
        for y0 in (0..33).step_by(5) {
            let rows = y0 * 16..(y0 + 5).min(33) * 16;
            let any = m.bits()[rows.clone()].iter().any(|&b| b);
            if any {
                assert_eq!(&out.bits()[rows.clone()], &m.bits()[rows]);
            } else {
                assert!(out.bits()[rows].iter().all(|&b| !b));
            }
        }
    }

    #[test]
    fn diagonal_neighbours_join() {
        let lm = label_components(&mask(2, 2, &[(0, 0), (1, 1)]));
        assert_eq!(lm.num_components(), 1);
        let lm = label_components(&mask(3, 3, &[(0, 0), (2, 2)]));
        assert_eq!(lm.num_components(), 2);
        let lm = label_components(&mask(3, 1, &[(0, 0), (2, 0)]));
        assert_eq!(lm.labels(), &[1, 0, 2]);
    }

    #[test]
    fn u_shape_merges_late() {
        // Two arms meet only at the bottom row.
        let on = [(0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0)];
        let lm = label_components(&mask(3, 3, &on));
        assert_eq!(lm.num_components(), 1);
        assert!(lm.labels().iter().all(|&l| l <= 1));
    }

    #[test]
    fn matches_flood_fill_on_random_masks() {
        for seed in 0..100 {
            let m = lcg_mask(seed, 64, 64, 0.1 + 0.5 * (seed % 7) as f64 / 7.0);
            assert_eq!(label_components(&m).labels(), flood_labels(&m).as_slice());
        }
    }

    #[test]
    fn component_filter() {
        let m = lcg_mask(3, 20, 20, 0.3);
        let lm = label_components(&m);
        assert_eq!(filter_components(&lm, 0), m);
        let five = mask(10, 10, &[(1, 1), (2, 1), (3, 1), (4, 1), (5, 1)]);
        assert_eq!(filter_components(&label_components(&five), 6).count(), 0);
        assert_eq!(filter_components(&label_components(&five), 5), five);
    }

    #[test]
    fn area_census_matches_flood_fill() {
        let m = lcg_mask(21, 48, 40, 0.35);
        let oracle = flood_labels(&m);
        let lm = label_components(&m);
        let mut counts = vec![0usize; lm.num_components() + 1];
        for &l in &oracle {
            counts[l as usize] += 1;
        }
        assert_eq!(lm.areas(), counts);
    }
}
