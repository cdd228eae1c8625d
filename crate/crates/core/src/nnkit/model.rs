//! The compact classifier and segmenter.
//!
//! Classifier: `[conv3x3 -> ReLU -> maxpool2] x B -> global average pool ->
//! affine`, producing one logit per class.
//!
//! Segmenter: a two-level encoder/decoder with skip connections.
//!
//! ```text
//! e1 = relu(conv(x))            p1 = pool(e1)
//! e2 = relu(conv(p1))           p2 = pool(e2)
//! d1 = relu(conv([up(p2), e2]))
//! d2 = relu(conv([up(d1), e1]))
//! y  = sigmoid(conv1x1(d2))
//! ```

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{self, ConvShape};
use super::{rng, Scalar, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_CLASSIFIER_CHANNELS: [usize; 4] = [4, 8, 16, 32];
pub const DEFAULT_SEGMENTER_CHANNELS: [usize; 2] = [8, 16];

/// Architecture descriptor. Two parameter sets are interchangeable exactly
/// when their descriptors are equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Arch {
    Classifier {
        in_channels: usize,
        height: usize,
        width: usize,
        channels: Vec<usize>,
        kernel: usize,
        outputs: usize,
    },
    Segmenter {
        in_channels: usize,
        height: usize,
        width: usize,
        channels: [usize; 2],
        kernel: usize,
    },
}

impl Arch {
    pub fn classifier(height: usize, width: usize) -> Self {
        Arch::Classifier {
            in_channels: 1,
            height,
            width,
            channels: DEFAULT_CLASSIFIER_CHANNELS.to_vec(),
            kernel: 3,
            outputs: crate::NUM_CLASSES,
        }
    }

    pub fn segmenter(height: usize, width: usize) -> Self {
        Arch::Segmenter {
            in_channels: 1,
            height,
            width,
            channels: DEFAULT_SEGMENTER_CHANNELS,
            kernel: 3,
        }
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self, Arch::Classifier { .. })
    }

    /// `(channels, height, width)` of one input sample.
    pub fn input_dims(&self) -> (usize, usize, usize) {
        match *self {
            Arch::Classifier {
                in_channels,
                height,
                width,
                ..
            }
            | Arch::Segmenter {
                in_channels,
                height,
                width,
                ..
            } => (in_channels, height, width),
        }
    }

    pub fn input_shape(&self, batch: usize) -> Vec<usize> {
        let (c, h, w) = self.input_dims();
        vec![batch, c, h, w]
    }

    pub fn output_shape(&self, batch: usize) -> Vec<usize> {
        match self {
            Arch::Classifier { outputs, .. } => vec![batch, *outputs],
            Arch::Segmenter { height, width, .. } => vec![batch, 1, *height, *width],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.input_dims();
        let (levels, kernel, widths): (usize, usize, Vec<usize>) = match self {
            Arch::Classifier {
                channels,
                kernel,
                outputs,
                ..
            } => {
                if *outputs == 0 {
                    return Err(Error::Parameter(
                        "classifier needs at least one output".into(),
                    ));
                }
                (channels.len(), *kernel, channels.clone())
            }
            Arch::Segmenter {
                channels, kernel, ..
            } => (2, *kernel, channels.to_vec()),
        };
        if c == 0 || widths.is_empty() || widths.contains(&0) {
            return Err(Error::Parameter("channel counts must be positive".into()));
        }
        if kernel % 2 == 0 {
            return Err(Error::Parameter(format!(
                "kernel size {kernel} must be odd"
            )));
        }
        let div = 1usize << levels;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(Error::Parameter(format!(
                "input {h}x{w} must be a positive multiple of {div}"
            )));
        }
        Ok(())
    }

    /// Shapes of the parameter tensors, in storage order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            Arch::Classifier {
                in_channels,
                channels,
                kernel,
                outputs,
                ..
            } => {
                let mut shapes = Vec::new();
                let mut c = *in_channels;
                for &co in channels {
                    shapes.push(vec![co, c, *kernel, *kernel]);
                    shapes.push(vec![co]);
                    c = co;
                }
                shapes.push(vec![*outputs, c]);
                shapes.push(vec![*outputs]);
                shapes
            }
            Arch::Segmenter {
                in_channels,
                channels: [c1, c2],
                kernel,
                ..
            } => {
                let k = *kernel;
                vec![
                    vec![*c1, *in_channels, k, k],
                    vec![*c1],
                    vec![*c2, *c1, k, k],
                    vec![*c2],
                    vec![*c1, 2 * c2, k, k],
                    vec![*c1],
                    vec![*c1, 2 * c1, k, k],
                    vec![*c1],
                    vec![1, *c1, 1, 1],
                    vec![1],
                ]
            }
        }
    }
}

/// Architecture descriptor plus its ordered parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S = f32> {
    arch: Arch,
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> ModelParams<S> {
    pub fn new(arch: Arch, tensors: Vec<Tensor<S>>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.param_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::Shape(format!(
                "architecture needs {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for (i, (s, t)) in shapes.iter().zip(&tensors).enumerate() {
            if s.as_slice() != t.shape() {
                return Err(Error::Shape(format!(
                    "tensor {i}: expected {s:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self { arch, tensors })
    }

    pub fn zeros(arch: Arch) -> Result<Self> {
        let tensors = arch.param_shapes().into_iter().map(Tensor::zeros).collect();
        Self::new(arch, tensors)
    }

    /// He-normal weights `N(0, sqrt(2 / fan_in))`, zero biases. Tensors are
    /// filled in storage order from the seed's init stream.
    pub fn init(arch: Arch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng::init_rng(seed);
        let tensors = arch
            .param_shapes()
            .into_iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(shape);
                }
                let fan_in: usize = shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                let n = shape.iter().product();
                Tensor::from_parts(
                    shape,
                    (0..n).map(|_| S::of(normal.sample(&mut rng))).collect(),
                )
            })
            .collect();
        Self::new(arch, tensors)
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            arch: self.arch.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
        }
    }

    fn t(&self, i: usize) -> &[S] {
        self.tensors[i].data()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Keeps every activation needed by [`model_backward`].
    Train,
    /// Forward only.
    Eval,
}

#[derive(Debug, Clone)]
struct Block<S> {
    shape: ConvShape,
    input: Vec<S>,
    act: Vec<S>,
    pool_idx: Vec<u8>,
}

#[derive(Debug, Clone)]
enum Tape<S> {
    Classifier {
        blocks: Vec<Block<S>>,
        pooled: Vec<S>,
        features: Vec<S>,
    },
    Segmenter(Box<SegTape<S>>),
}

#[derive(Debug, Clone)]
struct SegTape<S> {
    x: Vec<S>,
    e1: Vec<S>,
    i1: Vec<u8>,
    p1: Vec<S>,
    e2: Vec<S>,
    i2: Vec<u8>,
    cat1: Vec<S>,
    d1: Vec<S>,
    cat2: Vec<S>,
    d2: Vec<S>,
    out: Vec<S>,
}

/// Everything a backward pass needs from its forward pass, including a
/// snapshot of the parameters used.
#[derive(Debug, Clone)]
pub struct Cache<S = f32> {
    params: ModelParams<S>,
    batch: usize,
    tape: Option<Tape<S>>,
}

fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

pub fn model_forward<S: Scalar>(
    params: &ModelParams<S>,
    input: &Tensor<S>,
    mode: Mode,
) -> Result<(Tensor<S>, Cache<S>)> {
    let n = input.shape().first().copied().unwrap_or(0);
    if n == 0 || input.shape() != params.arch.input_shape(n).as_slice() {
        return Err(Error::Shape(format!(
            "input {:?} does not match architecture input {:?}",
            input.shape(),
            params.arch.input_shape(n.max(1))
        )));
    }
    let train = mode == Mode::Train;
    let (out, tape) = match &params.arch {
        Arch::Classifier { .. } => classifier_forward(params, input.data(), n, train),
        Arch::Segmenter { .. } => segmenter_forward(params, input.data(), n, train),
    };
    let out = Tensor::from_parts(params.arch.output_shape(n), out);
    Ok((
        out,
        Cache {
            params: params.clone(),
            batch: n,
            tape,
        },
    ))
}

fn classifier_forward<S: Scalar>(
    p: &ModelParams<S>,
    x: &[S],
    n: usize,
    train: bool,
) -> (Vec<S>, Option<Tape<S>>) {
    let Arch::Classifier {
        in_channels,
        height,
        width,
        channels,
        kernel,
        outputs,
    } = &p.arch
    else {
        unreachable!()
    };
    let (mut c, mut h, mut w) = (*in_channels, *height, *width);
    let mut cur = x.to_vec();
    let mut blocks = Vec::new();
    for (b, &co) in channels.iter().enumerate() {
        let shape = ConvShape {
            c_in: c,
            c_out: co,
            h,
            w,
            k: *kernel,
        };
        let mut act = layers::conv2d(&cur, n, &shape, p.t(2 * b), p.t(2 * b + 1));
        layers::relu_inplace(&mut act);
        let (pooled, pool_idx) = layers::maxpool2(&act, n * co, h, w);
        if train {
            blocks.push(Block {
                shape,
                input: cur,
                act,
                pool_idx,
            });
        }
        cur = pooled;
        c = co;
        h /= 2;
        w /= 2;
    }
    let head = 2 * channels.len();
    let features = layers::gap(&cur, n, c, h * w);
    let logits = layers::dense(&features, n, c, p.t(head), p.t(head + 1), *outputs);
    let tape = train.then_some(Tape::Classifier {
        blocks,
        pooled: cur,
        features,
    });
    (logits, tape)
}

fn segmenter_forward<S: Scalar>(
    p: &ModelParams<S>,
    x: &[S],
    n: usize,
    train: bool,
) -> (Vec<S>, Option<Tape<S>>) {
    let Arch::Segmenter {
        in_channels,
        height: h,
        width: w,
        channels: [c1, c2],
        kernel: k,
    } = p.arch.clone()
    else {
        unreachable!()
    };
    let (h2, w2) = (h / 2, w / 2);
    let s1 = ConvShape {
        c_in: in_channels,
        c_out: c1,
        h,
        w,
        k,
    };
    let mut e1 = layers::conv2d(x, n, &s1, p.t(0), p.t(1));
    layers::relu_inplace(&mut e1);
    let (p1, i1) = layers::maxpool2(&e1, n * c1, h, w);

    let s2 = ConvShape {
        c_in: c1,
        c_out: c2,
        h: h2,
        w: w2,
        k,
    };
    let mut e2 = layers::conv2d(&p1, n, &s2, p.t(2), p.t(3));
    layers::relu_inplace(&mut e2);
    let (p2, i2) = layers::maxpool2(&e2, n * c2, h2, w2);

    let u2 = layers::upsample2(&p2, n * c2, h / 4, w / 4);
    let cat1 = layers::concat_channels(&u2, c2, &e2, c2, n, h2 * w2);
    let s3 = ConvShape {
        c_in: 2 * c2,
        c_out: c1,
        h: h2,
        w: w2,
        k,
    };
    let mut d1 = layers::conv2d(&cat1, n, &s3, p.t(4), p.t(5));
    layers::relu_inplace(&mut d1);

    let u1 = layers::upsample2(&d1, n * c1, h2, w2);
    let cat2 = layers::concat_channels(&u1, c1, &e1, c1, n, h * w);
    let s4 = ConvShape {
        c_in: 2 * c1,
        c_out: c1,
        h,
        w,
        k,
    };
    let mut d2 = layers::conv2d(&cat2, n, &s4, p.t(6), p.t(7));
    layers::relu_inplace(&mut d2);

    let s5 = ConvShape {
        c_in: c1,
        c_out: 1,
        h,
        w,
        k: 1,
    };
    let out: Vec<S> = layers::conv2d(&d2, n, &s5, p.t(8), p.t(9))
        .into_iter()
        .map(sigmoid)
        .collect();
    let tape = train.then(|| {
        Tape::Segmenter(Box::new(SegTape {
            x: x.to_vec(),
            e1,
            i1,
            p1,
            e2,
            i2,
            cat1,
            d1,
            cat2,
            d2,
            out: out.clone(),
        }))
    });
    (out, tape)
}

impl<S: Scalar> Cache<S> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    fn tape(&self) -> Result<&Tape<S>> {
        self.tape
            .as_ref()
            .ok_or_else(|| Error::State("cache comes from an eval-mode forward pass".into()))
    }

    fn check_grad(&self, g: &Tensor<S>) -> Result<()> {
        let want = self.params.arch.output_shape(self.batch);
        if g.shape() != want.as_slice() {
            return Err(Error::State(format!(
                "output gradient {:?} does not match the cached forward output {:?}",
                g.shape(),
                want
            )));
        }
        Ok(())
    }

    /// Post-ReLU activations of the classifier's last convolution,
    /// shaped `(batch, channels, h, w)`.
    pub fn last_conv_activation(&self) -> Result<Tensor<S>> {
        match self.tape()? {
            Tape::Classifier { blocks, .. } => {
                let b = blocks.last().expect("at least one block");
                let s = b.shape;
                Ok(Tensor::from_parts(
                    vec![self.batch, s.c_out, s.h, s.w],
                    b.act.clone(),
                ))
            }
            Tape::Segmenter(_) => Err(Error::Compatibility(
                "last-conv activations need a classifier".into(),
            )),
        }
    }

    /// Gradient of `sum(output * output_grad)` with respect to the
    /// classifier's last post-ReLU activations.
    pub fn last_conv_grad(&self, output_grad: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_grad(output_grad)?;
        let Tape::Classifier {
            blocks,
            pooled,
            features,
        } = self.tape()?
        else {
            return Err(Error::Compatibility(
                "last-conv gradients need a classifier".into(),
            ));
        };
        let mut scratch: Vec<Vec<S>> = self
            .params
            .tensors
            .iter()
            .map(|t| vec![S::zero(); t.len()])
            .collect();
        let b = blocks.last().expect("at least one block");
        let dpool = self.head_backward(output_grad.data(), pooled, features, &mut scratch);
        let s = b.shape;
        let da = layers::maxpool2_backward(&dpool, &b.pool_idx, self.batch * s.c_out, s.h, s.w);
        Ok(Tensor::from_parts(vec![self.batch, s.c_out, s.h, s.w], da))
    }

    /// Dense + GAP backward; returns the gradient at the last pooled map.
    fn head_backward(
        &self,
        dlogits: &[S],
        pooled: &[S],
        features: &[S],
        grads: &mut [Vec<S>],
    ) -> Vec<S> {
        let Arch::Classifier {
            channels, outputs, ..
        } = &self.params.arch
        else {
            unreachable!()
        };
        let n = self.batch;
        let c = *channels.last().expect("non-empty");
        let head = 2 * channels.len();
        let plane = pooled.len() / (n * c);
        let (gw, gb) = grads.split_at_mut(head + 1);
        let dfeat = layers::dense_backward(
            features,
            n,
            c,
            self.params.t(head),
            *outputs,
            dlogits,
            &mut gw[head],
            &mut gb[0],
        );
        layers::gap_backward(&dfeat, n, c, plane)
    }
}

/// Exact gradients of `sum(output * output_grad)` with respect to every
/// parameter (in storage order) and to the input.
pub fn model_backward<S: Scalar>(
    cache: &Cache<S>,
    output_grad: &Tensor<S>,
) -> Result<(Vec<Tensor<S>>, Tensor<S>)> {
    let (grads, dx) = backward(cache, output_grad, true)?;
    let n = cache.batch;
    Ok((
        grads,
        Tensor::from_parts(cache.params.arch.input_shape(n), dx.expect("requested")),
    ))
}

/// Parameter gradients only; skips the input gradient of the first layer.
pub fn param_grads<S: Scalar>(cache: &Cache<S>, output_grad: &Tensor<S>) -> Result<Vec<Tensor<S>>> {
    Ok(backward(cache, output_grad, false)?.0)
}

fn backward<S: Scalar>(
    cache: &Cache<S>,
    output_grad: &Tensor<S>,
    want_dx: bool,
) -> Result<(Vec<Tensor<S>>, Option<Vec<S>>)> {
    cache.check_grad(output_grad)?;
    let params = &cache.params;
    let mut grads: Vec<Vec<S>> = params
        .tensors
        .iter()
        .map(|t| vec![S::zero(); t.len()])
        .collect();
    let n = cache.batch;
    let dx = match cache.tape()? {
        Tape::Classifier {
            blocks,
            pooled,
            features,
        } => {
            let mut d = Some(cache.head_backward(output_grad.data(), pooled, features, &mut grads));
            for (b, blk) in blocks.iter().enumerate().rev() {
                let d_in = d.take().expect("inner layers always propagate");
                let s = blk.shape;
                let mut da = layers::maxpool2_backward(&d_in, &blk.pool_idx, n * s.c_out, s.h, s.w);
                layers::relu_backward_inplace(&mut da, &blk.act);
                let (gw, gb) = grads.split_at_mut(2 * b + 1);
                d = layers::conv2d_backward(
                    &blk.input,
                    n,
                    &s,
                    params.t(2 * b),
                    &da,
                    &mut gw[2 * b],
                    &mut gb[0],
                    want_dx || b > 0,
                );
            }
            d
        }
        Tape::Segmenter(t) => {
            segmenter_backward(params, t, n, output_grad.data(), &mut grads, want_dx)
        }
    };
    let grads = grads
        .into_iter()
        .zip(params.tensors.iter())
        .map(|(g, t)| Tensor::from_parts(t.shape().to_vec(), g))
        .collect();
    Ok((grads, dx))
}

fn conv_back<S: Scalar>(
    p: &ModelParams<S>,
    grads: &mut [Vec<S>],
    w_idx: usize,
    x: &[S],
    n: usize,
    s: &ConvShape,
    dy: &[S],
) -> Vec<S> {
    conv_back_opt(p, grads, w_idx, x, n, s, dy, true).expect("requested")
}

#[allow(clippy::too_many_arguments)]
fn conv_back_opt<S: Scalar>(
    p: &ModelParams<S>,
    grads: &mut [Vec<S>],
    w_idx: usize,
    x: &[S],
    n: usize,
    s: &ConvShape,
    dy: &[S],
    want_dx: bool,
) -> Option<Vec<S>> {
    let (gw, gb) = grads.split_at_mut(w_idx + 1);
    layers::conv2d_backward(x, n, s, p.t(w_idx), dy, &mut gw[w_idx], &mut gb[0], want_dx)
}

fn segmenter_backward<S: Scalar>(
    p: &ModelParams<S>,
    t: &SegTape<S>,
    n: usize,
    g: &[S],
    grads: &mut [Vec<S>],
    want_dx: bool,
) -> Option<Vec<S>> {
    let Arch::Segmenter {
        in_channels,
        height: h,
        width: w,
        channels: [c1, c2],
        kernel: k,
    } = p.arch.clone()
    else {
        unreachable!()
    };
    let (h2, w2) = (h / 2, w / 2);
    let dz: Vec<S> = g
        .iter()
        .zip(&t.out)
        .map(|(&gi, &y)| gi * y * (S::one() - y))
        .collect();

    let s5 = ConvShape {
        c_in: c1,
        c_out: 1,
        h,
        w,
        k: 1,
    };
    let mut dd2 = conv_back(p, grads, 8, &t.d2, n, &s5, &dz);
    layers::relu_backward_inplace(&mut dd2, &t.d2);

    let s4 = ConvShape {
        c_in: 2 * c1,
        c_out: c1,
        h,
        w,
        k,
    };
    let dcat2 = conv_back(p, grads, 6, &t.cat2, n, &s4, &dd2);
    let (du1, de1_skip) = layers::split_channels(&dcat2, c1, c1, n, h * w);
    let mut dd1 = layers::upsample2_backward(&du1, n * c1, h2, w2);
    layers::relu_backward_inplace(&mut dd1, &t.d1);

    let s3 = ConvShape {
        c_in: 2 * c2,
        c_out: c1,
        h: h2,
        w: w2,
        k,
    };
    let dcat1 = conv_back(p, grads, 4, &t.cat1, n, &s3, &dd1);
    let (du2, de2_skip) = layers::split_channels(&dcat1, c2, c2, n, h2 * w2);
    let dp2 = layers::upsample2_backward(&du2, n * c2, h / 4, w / 4);
    let mut de2 = layers::maxpool2_backward(&dp2, &t.i2, n * c2, h2, w2);
    de2.iter_mut().zip(&de2_skip).for_each(|(a, &b)| *a += b);
    layers::relu_backward_inplace(&mut de2, &t.e2);

    let s2 = ConvShape {
        c_in: c1,
        c_out: c2,
        h: h2,
        w: w2,
        k,
    };
    let dp1 = conv_back(p, grads, 2, &t.p1, n, &s2, &de2);
    let mut de1 = layers::maxpool2_backward(&dp1, &t.i1, n * c1, h, w);
    de1.iter_mut().zip(&de1_skip).for_each(|(a, &b)| *a += b);
    layers::relu_backward_inplace(&mut de1, &t.e1);

    let s1 = ConvShape {
        c_in: in_channels,
        c_out: c1,
        h,
        w,
        k,
    };
    conv_back_opt(p, grads, 0, &t.x, n, &s1, &de1, want_dx)
}

/// Logits from given last-conv activations: the classifier's pool, global
/// average pool and affine head. Lets callers probe the head in isolation.
pub fn classifier_head<S: Scalar>(params: &ModelParams<S>, act: &Tensor<S>) -> Result<Tensor<S>> {
    let Arch::Classifier {
        channels, outputs, ..
    } = &params.arch
    else {
        return Err(Error::Compatibility(
            "classifier_head needs a classifier".into(),
        ));
    };
    let [n, c, h, w] = *act.shape() else {
        return Err(Error::Shape(format!(
            "activation must be rank 4, got {:?}",
            act.shape()
        )));
    };
    if c != *channels.last().expect("non-empty") || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "activation {:?} does not fit the head",
            act.shape()
        )));
    }
    let (pooled, _) = layers::maxpool2(act.data(), n * c, h, w);
    let features = layers::gap(&pooled, n, c, h * w / 4);
    let head = 2 * channels.len();
    Ok(Tensor::from_parts(
        vec![n, *outputs],
        layers::dense(
            &features,
            n,
            c,
            params.t(head),
            params.t(head + 1),
            *outputs,
        ),
    ))
}
