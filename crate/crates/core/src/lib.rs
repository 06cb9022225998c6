//! Spherical geometry SAR image formation.
//!
//! The processing chain maps pulse-compressed echoes onto the line-of-sight
//! projection `u`, applies a range correction that turns the spherical Earth
//! into an exact Fourier relationship, reformats the spectra onto a rectangular
//! `(kx, ky)` grid and forms the image with two inverse FFTs. Out-of-plane
//! motion from Earth rotation is handled by a first-order correction before
//! reformatting and a second-order correction between the two transforms.
//! Time-domain backprojection is provided as the reference image.

// NaN must fail the positivity checks, so they are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod axis;
pub mod backprojection;
pub mod echo_sim;
pub mod error;
pub mod fft;
pub mod geometry;
pub mod image_formation;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod mocomp;
pub mod pipeline;
pub mod polar_format;
pub mod preprocess;

pub use error::{Result, SgaError};

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
