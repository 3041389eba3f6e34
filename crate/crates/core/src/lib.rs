//! Unpaired photo→icon translation.
//!
//! The crate is layered bottom-up:
//!
//! - [`tensor`] and [`autodiff`]: dense tensors and a reverse-mode tape.
//! - [`nn`]: CycleGAN generators, PatchGAN discriminators and the UNIT
//!   encoder/decoder pairs with a shared latent block.
//! - [`loss`] and [`optim`]: adversarial, cycle, identity and VAE objectives,
//!   Adam, the learning-rate schedule and the image history pool.
//! - [`dataset`]: object cut-out extraction from segmentation annotations,
//!   icon augmentation, logo preparation and unpaired batch sampling.
//! - [`training`]: train steps, the coarse-to-fine stage driver,
//!   checkpoints and the conversion/reconstruction paths.

pub mod autodiff;
pub mod config;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod loss;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
