//! Conditional Wasserstein GAN with gradient penalty for augmenting mmWave
//! CSI amplitude data, plus the GAN-train / GAN-test evaluation protocol and
//! a CNN pose classifier.
//!
//! The crate is organised bottom-up:
//!
//! * [`autodiff`]: reverse-mode differentiation with second-order support and
//!   the layer primitives every network is built from.
//! * [`models`]: generator, critic, BCE discriminator and CNN classifier, plus
//!   the binary checkpoint container.
//! * [`data`]: CSI batches, the `CSI4DATA` file format, normalization,
//!   splitting and the synthetic desk-scale corpus.
//! * [`training`]: losses, Adam, the cWGAN-GP and BCE-cGAN loops and
//!   classifier training.
//! * [`evaluation`]: GAN-train, GAN-test, baseline and augmented accuracy.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use params::{GradMap, ModelParams};
pub use rng::Rng;
pub use tensor::Tensor;
