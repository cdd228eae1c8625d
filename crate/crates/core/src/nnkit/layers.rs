//! Batch kernels over NCHW slices. Convolutions are "same" padded, stride 1,
//! computed per sample as im2col followed by one GEMM.

use super::{gemm, Scalar};

/// Geometry of a square-kernel convolution on one feature map size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl ConvShape {
    fn pad(&self) -> usize {
        self.k / 2
    }

    fn col_rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn plane(&self) -> usize {
        self.h * self.w
    }
}

/// Valid output range `[lo, hi)` along an axis of length `len` for kernel
/// tap `t` with padding `pad`.
#[inline]
fn tap_range(len: usize, t: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(t).min(len);
    let hi = (len + pad).saturating_sub(t).min(len);
    (lo, hi.max(lo))
}

fn im2col<S: Scalar>(x: &[S], s: &ConvShape, cols: &mut [S]) {
    let (h, w, k, pad) = (s.h, s.w, s.k, s.pad());
    let plane = s.plane();
    for c in 0..s.c_in {
        let src = &x[c * plane..(c + 1) * plane];
        for ky in 0..k {
            let (ylo, yhi) = tap_range(h, ky, pad);
            for kx in 0..k {
                let (xlo, xhi) = tap_range(w, kx, pad);
                let row = &mut cols[((c * k + ky) * k + kx) * plane..][..plane];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    if y < ylo || y >= yhi {
                        dst.fill(S::zero());
                        continue;
                    }
                    let sy = y + ky - pad;
                    dst[..xlo].fill(S::zero());
                    dst[xhi..].fill(S::zero());
                    let sx0 = xlo + kx - pad;
                    dst[xlo..xhi].copy_from_slice(&src[sy * w + sx0..sy * w + sx0 + (xhi - xlo)]);
                }
            }
        }
    }
}

/// Transposed im2col restricted to image rows `y0..y1`: row `p` of `out`
/// holds the receptive field of pixel `y0 * w + p`.
fn im2row_rows<S: Scalar>(x: &[S], s: &ConvShape, y0: usize, y1: usize, out: &mut [S]) {
    let (h, w, k, pad) = (s.h, s.w, s.k, s.pad());
    let (plane, rows) = (s.plane(), s.col_rows());
    // Pixels whose k taps all fall inside the row.
    let (xin0, xin1) = (pad, (w + pad + 1).saturating_sub(k).max(pad));
    for y in y0..y1 {
        let base = (y - y0) * w;
        for c in 0..s.c_in {
            let src = &x[c * plane..(c + 1) * plane];
            for ky in 0..k {
                let col = (c * k + ky) * k;
                let sy = (y + ky).wrapping_sub(pad);
                if sy >= h {
                    for xx in 0..w {
                        out[(base + xx) * rows + col..][..k].fill(S::zero());
                    }
                    continue;
                }
                let row = &src[sy * w..(sy + 1) * w];
                for xx in (0..xin0.min(w)).chain(xin1.min(w)..w) {
                    for (kx, v) in out[(base + xx) * rows + col..][..k].iter_mut().enumerate() {
                        let sx = (xx + kx).wrapping_sub(pad);
                        *v = if sx < w { row[sx] } else { S::zero() };
                    }
                }
                if k == 3 {
                    // Short fixed copies; the generic loop becomes a memcpy call.
                    for xx in xin0..xin1.min(w) {
                        let seg = &mut out[(base + xx) * rows + col..][..3];
                        let src = &row[xx - 1..xx + 2];
                        seg[0] = src[0];
                        seg[1] = src[1];
                        seg[2] = src[2];
                    }
                } else {
                    for xx in xin0..xin1.min(w) {
                        out[(base + xx) * rows + col..][..k].copy_from_slice(&row[xx - pad..][..k]);
                    }
                }
            }
        }
    }
}

/// Below this many im2col rows a GEMM is mostly packing overhead and the
/// direct row-by-row form is faster.
const DIRECT_ROWS: usize = 32;

/// Pixels per transposed-im2col band in the weight gradient.
const IM2ROW_PIXELS: usize = 256;

/// Direct "same" convolution of one sample, output row by output row so the
/// row being accumulated stays in L1.
fn conv_direct<S: Scalar>(xi: &[S], s: &ConvShape, wt: &[S], yi: &mut [S]) {
    let (h, w, k, pad) = (s.h, s.w, s.k, s.pad());
    let plane = s.plane();
    let xr: Vec<(usize, usize)> = (0..k).map(|kx| tap_range(w, kx, pad)).collect();
    for o in 0..s.c_out {
        for yy in 0..h {
            let row = &mut yi[o * plane + yy * w..][..w];
            for ky in 0..k {
                let sy = yy + ky;
                if sy < pad || sy - pad >= h {
                    continue;
                }
                let sy = sy - pad;
                for c in 0..s.c_in {
                    let src_row = &xi[c * plane + sy * w..][..w];
                    for (kx, &(xlo, xhi)) in xr.iter().enumerate() {
                        let wv = wt[((o * s.c_in + c) * k + ky) * k + kx];
                        let src = &src_row[xlo + kx - pad..][..xhi - xlo];
                        for (d, &v) in row[xlo..xhi].iter_mut().zip(src) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut lanes = [S::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut t = S::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        t += x * y;
    }
    lanes.iter().fold(t, |acc, &v| acc + v)
}

/// Direct weight gradient of one sample, accumulated into `dw`.
fn conv_direct_dw<S: Scalar>(xi: &[S], s: &ConvShape, dyi: &[S], dw: &mut [S]) {
    let (h, w, k, pad) = (s.h, s.w, s.k, s.pad());
    let plane = s.plane();
    let xr: Vec<(usize, usize)> = (0..k).map(|kx| tap_range(w, kx, pad)).collect();
    let mut acc = vec![S::zero(); s.c_out * s.c_in * k * k];
    for o in 0..s.c_out {
        for yy in 0..h {
            let drow = &dyi[o * plane + yy * w..][..w];
            for ky in 0..k {
                let sy = yy + ky;
                if sy < pad || sy - pad >= h {
                    continue;
                }
                let sy = sy - pad;
                for c in 0..s.c_in {
                    let src_row = &xi[c * plane + sy * w..][..w];
                    for (kx, &(xlo, xhi)) in xr.iter().enumerate() {
                        let src = &src_row[xlo + kx - pad..][..xhi - xlo];
                        acc[((o * s.c_in + c) * k + ky) * k + kx] += dot(&drow[xlo..xhi], src);
                    }
                }
            }
        }
    }
    for (d, a) in dw.iter_mut().zip(acc) {
        *d += a;
    }
}

/// Blocked transpose of a `rows x cols` row-major matrix.
fn transpose_into<S: Scalar>(src: &[S], rows: usize, cols: usize, dst: &mut [S]) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// `y[n] = W * im2col(x[n]) + b` for every sample.
pub fn conv2d<S: Scalar>(x: &[S], n: usize, s: &ConvShape, wt: &[S], b: &[S]) -> Vec<S> {
    let (plane, rows) = (s.plane(), s.col_rows());
    let mut y = vec![S::zero(); n * s.c_out * plane];
    let direct = rows < DIRECT_ROWS && s.k > 1;
    let mut cols = if direct || s.k == 1 {
        Vec::new()
    } else {
        vec![S::zero(); rows * plane]
    };
    for i in 0..n {
        let xi = &x[i * s.c_in * plane..(i + 1) * s.c_in * plane];
        let yi = &mut y[i * s.c_out * plane..(i + 1) * s.c_out * plane];
        for (o, row) in yi.chunks_mut(plane).enumerate() {
            row.fill(b[o]);
        }
        if direct {
            conv_direct(xi, s, wt, yi);
        } else if s.k == 1 {
            gemm(s.c_out, rows, plane, wt, false, xi, false, S::one(), yi);
        } else {
            im2col(xi, s, &mut cols);
            gemm(s.c_out, rows, plane, wt, false, &cols, false, S::one(), yi);
        }
    }
    y
}

/// Weights of the adjoint convolution: channels swapped, taps flipped.
/// With "same" padding and an odd kernel, convolving the output gradient
/// with these gives the input gradient.
fn adjoint_weights<S: Scalar>(wt: &[S], s: &ConvShape) -> Vec<S> {
    let k = s.k;
    let mut out = vec![S::zero(); wt.len()];
    for o in 0..s.c_out {
        for c in 0..s.c_in {
            for ky in 0..k {
                for kx in 0..k {
                    out[((c * s.c_out + o) * k + (k - 1 - ky)) * k + (k - 1 - kx)] =
                        wt[((o * s.c_in + c) * k + ky) * k + kx];
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients into `dw`, `db` and returns the
/// input gradient when asked for.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<S: Scalar>(
    x: &[S],
    n: usize,
    s: &ConvShape,
    wt: &[S],
    dy: &[S],
    dw: &mut [S],
    db: &mut [S],
    want_dx: bool,
) -> Option<Vec<S>> {
    let (plane, rows) = (s.plane(), s.col_rows());
    let direct = rows < DIRECT_ROWS && s.k > 1;
    // dW = dy * im2col^T, done a few image rows at a time. The GEMM packing
    // reads an operand slowly when its inner dimension is the long pixel
    // axis, so both operands are laid out pixel-major.
    let band = (IM2ROW_PIXELS / s.w).clamp(1, s.h);
    let mut dyt = if direct {
        Vec::new()
    } else {
        vec![S::zero(); plane * s.c_out]
    };
    let mut chunk = if direct {
        Vec::new()
    } else {
        vec![S::zero(); band * s.w * rows]
    };
    for i in 0..n {
        let xi = &x[i * s.c_in * plane..(i + 1) * s.c_in * plane];
        let dyi = &dy[i * s.c_out * plane..(i + 1) * s.c_out * plane];
        for (o, row) in dyi.chunks(plane).enumerate() {
            let mut acc = S::zero();
            for &v in row {
                acc += v;
            }
            db[o] += acc;
        }
        if direct {
            conv_direct_dw(xi, s, dyi, dw);
            continue;
        }
        transpose_into(dyi, s.c_out, plane, &mut dyt);
        for y0 in (0..s.h).step_by(band) {
            let y1 = (y0 + band).min(s.h);
            let px = (y1 - y0) * s.w;
            im2row_rows(xi, s, y0, y1, &mut chunk);
            gemm(
                s.c_out,
                px,
                rows,
                &dyt[y0 * s.w * s.c_out..],
                true,
                &chunk[..px * rows],
                false,
                S::one(),
                dw,
            );
        }
    }
    want_dx.then(|| {
        let adj = ConvShape {
            c_in: s.c_out,
            c_out: s.c_in,
            ..*s
        };
        let zero = vec![S::zero(); s.c_in];
        if s.k == 1 {
            let mut dx = vec![S::zero(); n * s.c_in * plane];
            for i in 0..n {
                let dyi = &dy[i * s.c_out * plane..(i + 1) * s.c_out * plane];
                gemm(
                    s.c_in,
                    s.c_out,
                    plane,
                    wt,
                    true,
                    dyi,
                    false,
                    S::zero(),
                    &mut dx[i * s.c_in * plane..(i + 1) * s.c_in * plane],
                );
            }
            dx
        } else {
            conv2d(dy, n, &adj, &adjoint_weights(wt, s), &zero)
        }
    })
}

pub fn relu_inplace<S: Scalar>(v: &mut [S]) {
    for x in v {
        if *x < S::zero() {
            *x = S::zero();
        }
    }
}

/// Masks `dy` by `y > 0`, with `y` the ReLU output.
pub fn relu_backward_inplace<S: Scalar>(dy: &mut [S], y: &[S]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= S::zero() {
            *d = S::zero();
        }
    }
}

/// 2x2 stride-2 max pooling over `planes` maps of `h x w` (both even).
/// Returns the pooled maps and, per output, the winning offset `dy * 2 + dx`
/// (first maximum in row-major order on ties).
pub fn maxpool2<S: Scalar>(x: &[S], planes: usize, h: usize, w: usize) -> (Vec<S>, Vec<u8>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Vec::with_capacity(planes * oh * ow);
    let mut idx = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            let r0 = &src[2 * oy * w..];
            let r1 = &src[(2 * oy + 1) * w..];
            for ox in 0..ow {
                let c = [r0[2 * ox], r0[2 * ox + 1], r1[2 * ox], r1[2 * ox + 1]];
                let mut best = 0;
                for j in 1..4 {
                    if c[j] > c[best] {
                        best = j;
                    }
                }
                y.push(c[best]);
                idx.push(best as u8);
            }
        }
    }
    (y, idx)
}

pub fn maxpool2_backward<S: Scalar>(
    dy: &[S],
    idx: &[u8],
    planes: usize,
    h: usize,
    w: usize,
) -> Vec<S> {
    let (oh, ow) = (h / 2, w / 2);
    let mut dx = vec![S::zero(); planes * h * w];
    for p in 0..planes {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = (p * oh + oy) * ow + ox;
                let j = idx[o] as usize;
                dx[p * h * w + (2 * oy + j / 2) * w + 2 * ox + j % 2] = dy[o];
            }
        }
    }
    dx
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2<S: Scalar>(x: &[S], planes: usize, h: usize, w: usize) -> Vec<S> {
    let (uh, uw) = (2 * h, 2 * w);
    let mut y = vec![S::zero(); planes * uh * uw];
    for p in 0..planes {
        for uy in 0..uh {
            let src = &x[(p * h + uy / 2) * w..][..w];
            let dst = &mut y[(p * uh + uy) * uw..][..uw];
            for (ux, d) in dst.iter_mut().enumerate() {
                *d = src[ux / 2];
            }
        }
    }
    y
}

pub fn upsample2_backward<S: Scalar>(dy: &[S], planes: usize, h: usize, w: usize) -> Vec<S> {
    let (uh, uw) = (2 * h, 2 * w);
    let mut dx = vec![S::zero(); planes * h * w];
    for p in 0..planes {
        for uy in 0..uh {
            let src = &dy[(p * uh + uy) * uw..][..uw];
            let dst = &mut dx[(p * h + uy / 2) * w..][..w];
            for (ux, &v) in src.iter().enumerate() {
                dst[ux / 2] += v;
            }
        }
    }
    dx
}

/// Channel concatenation of two NCHW batches sharing `n` and the plane size.
pub fn concat_channels<S: Scalar>(
    a: &[S],
    ca: usize,
    b: &[S],
    cb: usize,
    n: usize,
    plane: usize,
) -> Vec<S> {
    let mut out = Vec::with_capacity(n * (ca + cb) * plane);
    for i in 0..n {
        out.extend_from_slice(&a[i * ca * plane..(i + 1) * ca * plane]);
        out.extend_from_slice(&b[i * cb * plane..(i + 1) * cb * plane]);
    }
    out
}

pub fn split_channels<S: Scalar>(
    x: &[S],
    ca: usize,
    cb: usize,
    n: usize,
    plane: usize,
) -> (Vec<S>, Vec<S>) {
    let mut a = Vec::with_capacity(n * ca * plane);
    let mut b = Vec::with_capacity(n * cb * plane);
    for i in 0..n {
        let base = i * (ca + cb) * plane;
        a.extend_from_slice(&x[base..base + ca * plane]);
        b.extend_from_slice(&x[base + ca * plane..base + (ca + cb) * plane]);
    }
    (a, b)
}

/// Global average pool: `(n, c, plane) -> (n, c)`.
pub fn gap<S: Scalar>(x: &[S], n: usize, c: usize, plane: usize) -> Vec<S> {
    let inv = S::one() / S::of(plane as f64);
    (0..n * c)
        .map(|j| {
            let mut acc = S::zero();
            for &v in &x[j * plane..(j + 1) * plane] {
                acc += v;
            }
            acc * inv
        })
        .collect()
}

pub fn gap_backward<S: Scalar>(dy: &[S], n: usize, c: usize, plane: usize) -> Vec<S> {
    let inv = S::one() / S::of(plane as f64);
    let mut dx = Vec::with_capacity(n * c * plane);
    for &d in &dy[..n * c] {
        dx.extend(std::iter::repeat(d * inv).take(plane));
    }
    dx
}

/// `y = x W^T + b` with `x: (n, i)`, `W: (o, i)`.
pub fn dense<S: Scalar>(x: &[S], n: usize, i: usize, wt: &[S], b: &[S], o: usize) -> Vec<S> {
    let mut y: Vec<S> = (0..n).flat_map(|_| b[..o].iter().copied()).collect();
    gemm(n, i, o, x, false, wt, true, S::one(), &mut y);
    y
}

#[allow(clippy::too_many_arguments)]
pub fn dense_backward<S: Scalar>(
    x: &[S],
    n: usize,
    i: usize,
    wt: &[S],
    o: usize,
    dy: &[S],
    dw: &mut [S],
    db: &mut [S],
) -> Vec<S> {
    for row in dy.chunks(o) {
        for (g, &v) in db.iter_mut().zip(row) {
            *g += v;
        }
    }
    gemm(o, n, i, dy, true, x, false, S::one(), dw);
    let mut dx = vec![S::zero(); n * i];
    gemm(n, o, i, dy, false, wt, false, S::zero(), &mut dx);
    dx
}
