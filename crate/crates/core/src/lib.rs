//! Diffusion-guided domain calibration for unsupervised low-light image
//! enhancement.
//!
//! A small denoising diffusion model is used in two ways:
//!
//! * **Degradation calibration (DDC)**: an out-of-domain low-light input is
//!   brightened with a gamma curve, pushed a few low-noise DDIM steps into
//!   the diffusion latent space and denoised back, which pulls it toward the
//!   clean training distribution before enhancement.
//! * **Target-domain distillation (FTD)**: the same round-trip refines the
//!   coarse outputs of an unsupervised (CycleGAN-style) enhancer into
//!   pseudo-references that the enhancer is then fine-tuned on with an L1
//!   objective.
//!
//! All numerical code is generic over [`Scalar`] (`f32` for training,
//! `f64` for gradient verification); the aliases below name the common
//! instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data_io;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod nnet;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod schedule;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use schedule::NoiseSchedule;
pub use tensor::ImageTensor;

/// Single-precision image; the storage type used for training and inference.
pub type Image = tensor::ImageTensor<f32>;
/// Double-precision image, used by gradient checks and oracle tests.
pub type Image64 = tensor::ImageTensor<f64>;
/// Single-precision network parameters.
pub type Network = nnet::NetworkParams<f32>;
/// Double-precision network parameters.
pub type Network64 = nnet::NetworkParams<f64>;
