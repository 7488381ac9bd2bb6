//! Frequency-decomposition time-series forecasting with Chebyshev KAN layers.
//!
//! The model splits a look-back window into a hierarchy of moving-average
//! levels, peels them into frequency bands with spectral upsampling, learns
//! each band with a depthwise convolution plus a Chebyshev KAN whose order
//! grows with band frequency, and mixes the bands back before a linear head.
//!
//! Everything here is `no_std` + `alloc`: tensors, the FFT, layers with
//! hand-written backward passes, the training loop and the gradient checker.
//! File formats and the command line live in the `timekan` crate.
//!
//! Features:
//! - `std` (default): `std::error::Error` integration.
//! - `parallel`: data-parallel batch gradients and evaluation via rayon. Results
//!   are bit-identical with and without it.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]
// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::large_enum_variant)]

extern crate alloc;

pub mod data;
mod error;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod numerics;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
pub use model::{ModelConfig, OrderPolicy, TimeKanModel, UpsamplerKind};
pub use numerics::{Parameter, Rng, Tensor};
pub use training::{FitReport, TrainConfig};
