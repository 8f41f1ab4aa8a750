//! Spectral solver for Monge-Ampère equations of (n-1)-plurisubharmonic
//! functions on flat Hermitian tori `C^n / (Z^n + iZ^n)`.
//!
//! The crate is `no_std` with `alloc`. Fields are sampled on a periodic grid
//! and differentiated with Fourier multipliers; pointwise algebra runs on
//! small dense Hermitian matrices.
//!
//! Layers, bottom to top:
//!
//! * [`linalg`], [`fft`], [`grid`]: matrices, transforms, fields.
//! * [`geometry`]: star duals, Chern connection, metric-condition defects.
//! * [`ma`]: the two equation variants, residuals and linearizations.
//! * [`solver`]: damped Newton with continuity in `t`, adjoint kernel,
//!   Gauduchon conformal factor.
//! * [`diagnostics`], [`drivers`]: estimate monitors and end-to-end pipelines.
//! * [`synth`]: analytic test metrics and manufactured problems.

#![no_std]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

extern crate alloc;
#[cfg(any(test, feature = "parallel"))]
extern crate std;

pub mod diagnostics;
pub mod drivers;
pub mod error;
pub mod fft;
pub mod geometry;
pub mod grid;
pub mod krylov;
pub mod linalg;
pub mod ma;
mod par;
pub mod solver;
pub mod synth;

pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};
pub use geometry::{ConnectionData, FormNM1, MetricDefects};

pub use grid::{HermField, MetricField, ScalarField, TorusGrid};
pub use linalg::HermMatrix;
pub use ma::{ProblemSpec, RhsVolume, SolveState, Variant};
pub use solver::{SolveReport, SolverConfig};


