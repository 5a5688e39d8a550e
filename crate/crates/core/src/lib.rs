//! Numerical core of a capsule-network spoken language identifier.
//!
//! Everything here is pure computation over in-memory buffers: WAV byte
//! decoding, short-time Fourier spectrograms, a small reverse-mode
//! differentiation tape, the capsule encoder/decoder with dynamic routing,
//! margin loss, Adam, out-of-set thresholds, classification metrics and a
//! synthetic audio generator. File IO, training orchestration and the CLI
//! live in the `capslid` crate.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `std` feature to let
//! the matrix kernels pick SIMD paths at runtime.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod capsnet;
pub mod datagen;
pub mod dsp;
mod error;
pub mod math;
pub mod metrics;
pub mod nonclass;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Number of in-set languages the classifier distinguishes.
pub const NUM_LANGUAGES: usize = 5;
