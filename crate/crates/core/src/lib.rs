//! Core of the convolutional denoiser benchmark.
//!
//! Everything here is pure computation over `alloc` collections: a dense
//! `f32` tensor type, the differentiable operators used by the three
//! denoising autoencoders, a tape-based reverse-mode engine, the Adam
//! optimizer, graph builders for CNN-DAE, CADTra and DCMIEDNet, PSNR/SSIM,
//! the synthetic data pipeline and the training protocol. File IO, image
//! decoding and the command line live in the `denobench` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod arch;
pub mod cache;
pub mod checkpoint;
mod codec;
pub mod data;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod metrics;
pub mod ops;
pub mod optim;
mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use arch::{Architecture, ModelGraph, WidthScale};
pub use error::{Error, FormatError, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Forward-pass mode. Only batch normalization behaves differently.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
