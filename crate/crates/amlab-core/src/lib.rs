//! A desk-scale laboratory for large-margin softmax losses on the unit
//! hypersphere.
//!
//! The crate implements four classification objectives over a shared
//! cosine-logit layer — plain softmax, normalized softmax with a fixed
//! scale, the multiplicative angular-margin softmax, and the additive
//! margin softmax — together with exact analytic gradients, the planar
//! decision-boundary geometry of the margin, L2-normalization backward
//! passes, a small MLP trainer, and ROC/CMC verification metrics.
//!
//! Everything is `f64`, deterministic per seed, and free of I/O; the
//! companion `amlab` crate carries file formats and the CLI. The crate
//! builds without `std` (enable the `libm` feature instead) since all
//! operations are pure functions over owned buffers.
//!
//! Conventions: matrices are row-major; feature batches are `n x d` with
//! one sample per row, and class weights are the rows of a `c x d`
//! matrix (the usual column convention, stored transposed).

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("amlab-core needs either the `std` feature or the `libm` feature");

extern crate alloc;

pub mod data;
pub mod error;
mod fp;
pub mod loss;
pub mod margin;
pub mod metrics;
pub mod norm;
pub mod numeric;
pub mod train;

pub use error::{CoreError, CoreResult};
pub use numeric::{Matrix, Rng};
