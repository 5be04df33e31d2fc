//! Acoustic inspection toolkit: wideband direction-of-arrival estimation with a
//! uniform circular microphone array, spectral-template leak detection, and
//! bearing-only source localization from a moving platform, together with a
//! synthetic scene renderer and evaluation statistics.

// Validation tests are written `!(x > 0.0)` on purpose: unlike `x <= 0.0`
// they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod cli;
pub mod config;
pub mod detect;
pub mod doa;
pub mod error;
pub mod localize;
pub mod report;
pub mod spectra;
pub mod synth;
pub mod wav;

pub use error::{Error, Result};

/// Scalar type used throughout.
pub type F = f64;
/// Complex type used throughout.
pub type C = num_complex::Complex<F>;
