//! Operator-learning toolkit built around a Laplace-domain neural operator.
//!
//! The core pieces:
//!
//! - [`tensor`]: dense real/complex tensors with a reverse-mode tape.
//! - [`fourier`]: two-sided Fourier analysis/synthesis with adjoint rules.
//! - [`laplace`]: the pole-residue kernel operator (1D and separable 2D),
//!   computing transient and steady-state responses via the residue theorem.
//! - [`spectral`]: truncated spectral-convolution layers (Fourier baseline).
//! - [`model`]: lifting / operator block / projection assemblies with
//!   deterministic initialization and a byte-stable checkpoint format.
//! - [`ode`]: Dormand-Prince 5(4) adaptive integration.
//! - [`data`]: the six benchmark dataset generators and their file format.
//! - [`train`]: Adam, the training loop, evaluation, and multi-trial runs.
//! - [`reproduce`]: end-to-end comparison runs (tables, plots, manifests).

pub mod data;
pub mod error;
mod fft;
pub mod fourier;
pub mod laplace;
pub mod manifest;
pub mod model;
pub mod ode;
pub mod reproduce;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
