//! Thin helpers over `rustfft`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub fn forward(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(n)
}

pub fn inverse(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_inverse(n)
}

/// Smallest power of two that is at least `factor * n`.
pub fn padded_len(n: usize, factor: usize) -> usize {
    (n * factor.max(1)).next_power_of_two()
}

/// Moves the zero-frequency bin to the centre (index `n/2`).
pub fn fftshift(v: &mut [Complex64]) {
    let n = v.len();
    v.rotate_right(n / 2);
}

pub fn ifftshift(v: &mut [Complex64]) {
    let n = v.len();
    v.rotate_left(n / 2);
}
