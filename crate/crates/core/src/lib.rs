//! Numerical toolkit for anisotropic mixed-norm Hardy spaces.
//!
//! The crate builds the dilation geometry of an expansive matrix, evaluates
//! step quasi-norms and iterated mixed Lebesgue norms on tensor grids,
//! generates certified atoms with vanishing moments, computes their Fourier
//! transforms by direct quadrature, and runs the estimate experiments that
//! compare measured quantities with their predicted decay and integrability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atom;
pub mod dilation;
pub mod error;
pub mod fourier;
pub mod grid;
pub mod mixed_norm;
pub mod poly;
pub mod quasi_norm;
pub mod sampling;
pub mod stats;
pub mod verify;

pub use dilation::{
    transpose_dilation, validate_dilation, Dilation, DilationOptions, EllipsoidForm,
};
pub use error::{Error, Result};
pub use mixed_norm::ExponentVector;
pub use quasi_norm::QuasiNormEvaluator;
