//! Compressed sensing of constrained joint sparsity (CJS).
//!
//! The crate recovers jointly row-sparse multi-vectors subject to a linear
//! constraint. The working example is total-variation minimization of a
//! pixelated object, where the unknown is the discrete gradient of the
//! object and the constraint is the discrete curl-free condition.
//!
//! Everything here is `no_std` + `alloc` unless the `fft` feature is on. File formats, the command line and
//! the experiment harness live in the companion `cjs` crate.
//!
//! # Layout
//!
//! - [`multivec`]: multi-vectors, mixed `(b,a)` norms, row supports.
//! - [`grad`]: images, discrete gradients, TV, curl, integration.
//! - [`sensing`]: sampling schemes, the partial Fourier sensing operator,
//!   Born scattering amplitudes, coherence and RIC diagnostics.
//! - [`measure`]: object data, lifting to gradient data, noise.
//! - [`bpdn`]: TV-min and row-sparse basis pursuit denoising.
//! - [`omp`]: joint-sparsity OMP, the constrained refit and level sets.
//! - [`phantom`]: Shepp-Logan, piecewise-constant and point phantoms.
//! - [`metrics`]: reconstruction error metrics.

#![cfg_attr(not(feature = "fft"), no_std)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bpdn;
pub mod error;
pub mod fft;
pub mod grad;
pub mod linalg;
pub mod measure;
pub mod metrics;
pub mod multivec;
pub mod omp;
pub mod phantom;
pub mod sensing;

mod math;

pub use error::{Error, Result};
pub use grad::{GradientField, Image, TvMode};
pub use multivec::{Exponent, MultiVector, SupportSet};
pub use sensing::{LinearMap, SamplingMode, SamplingPlan, Scheme, SchemeConfig, SensingOperator};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
