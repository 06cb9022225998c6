//! Separable inverse transforms from the `(kx, ky)` grid to the `(x, y)` image.
//!
//! Both axes are zero-padded to a power of two of at least twice the support and
//! referenced to the scene centre, so pixel values carry the absolute phase of
//! the reflectivity at their `(x, y)` location.

use std::f64::consts::PI;

use ndarray::{s, Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::axis::LinearAxis;
use crate::echo_sim::RadarParams;
use crate::error::{Result, SgaError};
use crate::fft;
use crate::geometry::EarthModel;
use crate::interp::sinc;
use crate::mocomp::{self, SceneReference};
use crate::polar_format::{AzimuthMapSample, ResampleMode, WavenumberData};

/// Default zero-padding factor of both image axes.
pub const DEFAULT_PAD: usize = 2;

/// Data after the `ky` transform: rows follow `kx`, columns follow `y`.
#[derive(Clone, Debug)]
pub struct RangeCompressed {
    pub data: Array2<Complex64>,
    pub kx: LinearAxis,
    pub y_axis: LinearAxis,
    pub delta_kx: f64,
    pub delta_ky: f64,
    pub fc_bar_ref: f64,
    pub mode: ResampleMode,
    pub scene: SceneReference,
    pub earth: EarthModel,
    pub radar: RadarParams,
    pub azimuth_map: Vec<AzimuthMapSample>,
    pub first_order_applied: bool,
    pub second_order_applied: bool,
}

/// Focused complex image: rows follow `x`, columns follow `y`.
#[derive(Clone, Debug)]
pub struct ComplexImage {
    pub data: Array2<Complex64>,
    pub x_axis: LinearAxis,
    pub y_axis: LinearAxis,
    pub delta_kx: f64,
    pub delta_ky: f64,
}

impl ComplexImage {
    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    /// Sub-image of rows `x0..x0+nx` and columns `y0..y0+ny`.
    pub fn crop(&self, x0: usize, nx: usize, y0: usize, ny: usize) -> Result<ComplexImage> {
        let (rx, ry) = self.data.dim();
        if x0 + nx > rx || y0 + ny > ry {
            return Err(SgaError::GridMismatch("crop window exceeds the image".into()));
        }
        Ok(ComplexImage {
            data: self.data.slice(s![x0..x0 + nx, y0..y0 + ny]).to_owned(),
            x_axis: LinearAxis::new(self.x_axis.value(x0), self.x_axis.step, nx),
            y_axis: LinearAxis::new(self.y_axis.value(y0), self.y_axis.step, ny),
            delta_kx: self.delta_kx,
            delta_ky: self.delta_ky,
        })
    }

    /// Window of `nx` by `ny` pixels centred on the pixel nearest `(x, y)`.
    pub fn patch_around(&self, x: f64, y: f64, nx: usize, ny: usize) -> Result<ComplexImage> {
        let ix = self.x_axis.position(x).round() as isize - (nx / 2) as isize;
        let iy = self.y_axis.position(y).round() as isize - (ny / 2) as isize;
        if ix < 0 || iy < 0 {
            return Err(SgaError::GridMismatch("patch window exceeds the image".into()));
        }
        self.crop(ix as usize, nx, iy as usize, ny)
    }

    /// Grids match when spacing, origin and size agree to a small fraction of a pixel.
    pub fn same_grid(&self, other: &ComplexImage) -> bool {
        let close = |a: &LinearAxis, b: &LinearAxis| {
            a.len == b.len && (a.step - b.step).abs() <= 1e-9 * a.step.abs() && (a.start - b.start).abs() <= 1e-6 * a.step.abs()
        };
        close(&self.x_axis, &other.x_axis) && close(&self.y_axis, &other.y_axis)
    }

    /// Largest-magnitude pixel as `(row, column)`.
    pub fn peak_index(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut mag = -1.0;
        for ((i, j), v) in self.data.indexed_iter() {
            let m = v.norm_sqr();
            if m > mag {
                mag = m;
                best = (i, j);
            }
        }
        best
    }
}

/// Inverse transform along `ky` with scene-centre referencing.
pub fn range_compress(w: &WavenumberData, pad: usize) -> Result<RangeCompressed> {
    let (n_t, n_f) = w.data.dim();
    if n_f < 2 {
        return Err(SgaError::validation("wavenumber data", "needs at least two ky samples"));
    }
    let m = fft::padded_len(n_f, pad.max(2));
    let dy = 2.0 * PI / (m as f64 * w.ky.step);
    let y_axis = LinearAxis::centred(w.scene.y_c, dy, m);
    let y_c = w.scene.y_c;
    let demod: Vec<Complex64> = (0..n_f)
        .map(|n| Complex64::from_polar(1.0 / n_f as f64, w.ky.value(n) * y_c))
        .collect();
    let carrier: Vec<Complex64> = (0..m)
        .map(|j| Complex64::from_polar(1.0, w.ky.start * (j as f64 - (m / 2) as f64) * dy))
        .collect();
    let plan = fft::inverse(m);
    let mut data = Array2::<Complex64>::zeros((n_t, m));
    data.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(w.data.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, row)| {
            let mut buf = vec![Complex64::new(0.0, 0.0); m];
            for ((b, v), d) in buf.iter_mut().zip(row.iter()).zip(demod.iter()) {
                *b = v * d;
            }
            plan.process(&mut buf);
            fft::fftshift(&mut buf);
            for ((o, b), c) in out.iter_mut().zip(buf.iter()).zip(carrier.iter()) {
                *o = b * c;
            }
        });
    Ok(RangeCompressed {
        data,
        kx: w.kx,
        y_axis,
        delta_kx: w.delta_kx,
        delta_ky: w.delta_ky,
        fc_bar_ref: w.fc_bar_ref,
        mode: w.mode,
        scene: w.scene,
        earth: w.earth,
        radar: w.radar,
        azimuth_map: w.azimuth_map.clone(),
        first_order_applied: w.first_order_applied,
        second_order_applied: false,
    })
}

/// Inverse transform along `kx`, returning the reflectivity image.
pub fn azimuth_compress(rc: &RangeCompressed, pad: usize) -> Result<ComplexImage> {
    let (n_t, n_y) = rc.data.dim();
    if n_t < 2 {
        return Err(SgaError::validation("range-compressed data", "needs at least two kx samples"));
    }
    let m = fft::padded_len(n_t, pad.max(2));
    let dx = 2.0 * PI / (m as f64 * rc.kx.step);
    let x_axis = LinearAxis::centred(rc.scene.x_c, dx, m);
    let x_c = rc.scene.x_c;
    let demod: Vec<Complex64> = (0..n_t)
        .map(|l| Complex64::from_polar(1.0 / n_t as f64, rc.kx.value(l) * x_c))
        .collect();
    let carrier: Vec<Complex64> = (0..m)
        .map(|i| Complex64::from_polar(1.0, rc.kx.start * (i as f64 - (m / 2) as f64) * dx))
        .collect();
    let plan = fft::inverse(m);
    let src_t = rc.data.t().as_standard_layout().to_owned();
    let mut out_t = Array2::<Complex64>::zeros((n_y, m));
    out_t
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(src_t.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, col)| {
            let mut buf = vec![Complex64::new(0.0, 0.0); m];
            for ((b, v), d) in buf.iter_mut().zip(col.iter()).zip(demod.iter()) {
                *b = v * d;
            }
            plan.process(&mut buf);
            fft::fftshift(&mut buf);
            for ((o, b), c) in out.iter_mut().zip(buf.iter()).zip(carrier.iter()) {
                *o = (b * c).conj();
            }
        });
    drop(src_t);
    let data = out_t.t().as_standard_layout().to_owned();
    Ok(ComplexImage {
        data,
        x_axis,
        y_axis: rc.y_axis,
        delta_kx: rc.delta_kx,
        delta_ky: rc.delta_ky,
    })
}

/// Range compression, optional second-order compensation and azimuth compression.
pub fn form_image(w: &WavenumberData, pad: usize, second_order: bool) -> Result<ComplexImage> {
    let mut rc = range_compress(w, pad)?;
    if second_order {
        rc = mocomp::second_order_comp(&rc)?;
    }
    azimuth_compress(&rc, pad)
}

/// Ideal separable response of a rectangular `(Delta kx, Delta ky)` support.
pub fn theoretical_psf(delta_kx: f64, delta_ky: f64, x: f64, y: f64) -> f64 {
    sinc(delta_kx * x / (2.0 * PI)) * sinc(delta_ky * y / (2.0 * PI))
}

/// Theoretical -3 dB widths `(x, y)` for the supports in `img`.
pub fn theoretical_irw(delta_kx: f64, delta_ky: f64) -> (f64, f64) {
    (0.886 * 2.0 * PI / delta_kx, 0.886 * 2.0 * PI / delta_ky)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar_format::AzimuthMapSample;

    fn synthetic(x_t: f64, y_t: f64, scene: SceneReference) -> WavenumberData {
        let n_t = 64;
        let n_f = 48;
        let kx = LinearAxis::new(-2.0, 4.0 / (n_t as f64 - 1.0), n_t);
        let ky = LinearAxis::new(500.0, 0.05, n_f);
        let data = Array2::from_shape_fn((n_t, n_f), |(l, k)| {
            Complex64::from_polar(1.0, -(kx.value(l) * x_t + ky.value(k) * y_t))
        });
        WavenumberData {
            data,
            kx,
            ky,
            delta_kx: kx.last() - kx.start,
            delta_ky: ky.last() - ky.start,
            omega: 1e-3,
            fc_bar_ref: 1e10,
            mode: ResampleMode::LowRes,
            scene,
            earth: EarthModel::default(),
            radar: RadarParams {
                fc: 5e9,
                bandwidth: 1e7,
                pulse_duration: 1e-5,
                fs: 1.25e7,
            },
            first_order_applied: false,
            azimuth_map: (0..n_t)
                .map(|l| AzimuthMapSample {
                    t_tilde: l as f64,
                    t: l as f64,
                    theta: 0.0,
                    phi: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn target_on_a_pixel_focuses_to_unit_real_peak() {
        let scene = SceneReference {
            x_c: 10.0,
            y_c: 5.9e6,
            z_c: 2.5e6,
        };
        // place the target exactly on a pixel
        let probe = form_image(&synthetic(0.0, 0.0, scene), 2, false).unwrap();
        let x_t = probe.x_axis.value(probe.x_axis.len / 2 + 3);
        let y_t = probe.y_axis.value(probe.y_axis.len / 2 - 5);
        let img = form_image(&synthetic(x_t, y_t, scene), 2, false).unwrap();
        let (i, j) = img.peak_index();
        assert_eq!((i, j), (img.x_axis.len / 2 + 3, img.y_axis.len / 2 - 5));
        let v = img.data[[i, j]];
        assert!((v.re - 1.0).abs() < 1e-9, "{v}");
        assert!(v.im.abs() < 1e-6, "{v}");
    }

    #[test]
    fn response_follows_separable_sinc() {
        let scene = SceneReference {
            x_c: 0.0,
            y_c: 1000.0,
            z_c: 1.0,
        };
        let w = synthetic(0.0, 1000.0, scene);
        let img = form_image(&w, 2, false).unwrap();
        let (ci, cj) = (img.x_axis.len / 2, img.y_axis.len / 2);
        // a uniformly weighted sampled support gives a Dirichlet kernel
        for d in 1..6 {
            let x = img.x_axis.value(ci + d) - scene.x_c;
            let n = w.kx.len as f64;
            let a = 0.5 * w.kx.step * x;
            let dirichlet = (n * a).sin() / (n * a.sin());
            let got = img.data[[ci + d, cj]].norm();
            assert!((got - dirichlet.abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn padding_and_axes() {
        let scene = SceneReference {
            x_c: 0.0,
            y_c: 0.0,
            z_c: 1.0,
        };
        let img = form_image(&synthetic(0.0, 0.0, scene), 2, false).unwrap();
        assert_eq!(img.x_axis.len, 128);
        assert_eq!(img.y_axis.len, 128);
        assert!((img.x_axis.step - 2.0 * PI / (128.0 * 4.0 / 63.0)).abs() < 1e-12);
        let p = img.patch_around(0.0, 0.0, 16, 16).unwrap();
        assert!(img.crop(120, 16, 0, 4).is_err());
        assert_eq!(p.data.dim(), (16, 16));
        assert!(p.same_grid(&p.clone()));
    }

    #[test]
    fn psf_formula() {
        assert_eq!(theoretical_psf(1.0, 1.0, 0.0, 0.0), 1.0);
        assert!(theoretical_psf(2.0 * PI, 1.0, 1.0, 0.0).abs() < 1e-15);
        let (ix, iy) = theoretical_irw(2.0 * PI, PI);
        assert!((ix - 0.886).abs() < 1e-12 && (iy - 1.772).abs() < 1e-12);
    }
}
