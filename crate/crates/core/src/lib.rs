//! Dilated-convolution motor-imagery EEG classifier kernels.
//!
//! Everything in this crate is pure computation over heap buffers: a small
//! dense [`Tensor`], the differentiable layer primitives in [`ops`], the
//! network itself in [`model`], Adam training in [`train`], the evaluation
//! metrics, architecture arithmetic in [`analysis`] and the in-memory trial
//! container in [`data`]. File formats and the command-line driver live in
//! the `dcnet` crate.
//!
//! All tensors are row-major `f64`. Activations use channel-last layout
//! `[batch, height, width, channels]` where height is the time axis.
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analysis;
pub mod data;
mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod ops;
mod rng;
mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;
