//! A small CPU neural toolkit.
//!
//! Tensors are row-major, images are NCHW. Everything numeric is generic over
//! [`Scalar`] so the same model code runs in `f32` for training and in `f64`
//! for finite-difference gradient checks.
//!
//! There is no autograd: [`model_forward`] records what [`model_backward`]
//! needs in a [`Cache`], and the two loss kernels come with hand-derived
//! gradients.

pub mod augment;
pub mod layers;
mod loss;
mod model;
mod optim;
pub mod rng;
mod scalar;
mod tensor;
mod weights;

pub use augment::{pixel_dropout, random_rotation, rotate};
pub use loss::{bce_grad, bce_logits, ftl, ftl_grad, sigmoid, FtlParams};
pub use model::{
    classifier_head, model_backward, model_forward, param_grads, Arch, Cache, Mode, ModelParams,
    DEFAULT_CLASSIFIER_CHANNELS, DEFAULT_SEGMENTER_CHANNELS,
};
pub use optim::{cosine_lr, sgd_step, sgd_step_in_place, PixelDrop, Rotation, TrainConfig};
pub use scalar::{gemm, Scalar};
pub use tensor::Tensor;
pub use weights::{decode_weights, encode_weights, load_weights, save_weights};
