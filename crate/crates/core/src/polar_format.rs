//! Two-pass polar reformatting onto a rectangular `(kx, ky)` grid.
//!
//! The range pass rescales each pulse so that its wavenumbers project onto a
//! common `ky = (4 pi / c)(fc_bar_ref + f~)` axis. The azimuth pass then
//! resamples every `ky` column in slow time so that
//! `kx = (4 pi / c) fc_bar_ref Omega t~` is uniform.

use std::f64::consts::PI;

use log::warn;
use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axis::LinearAxis;
use crate::echo_sim::RadarParams;
use crate::error::{Result, SgaError};
use crate::geometry::{EarthModel, SPEED_OF_LIGHT};
use crate::interp::{MonotoneCubic, SincInterpolator};
use crate::mocomp::SceneReference;
use crate::preprocess::{PhaseHistory, PhaseHistoryStage, PulseInfo};

const FOUR_PI_OVER_C: f64 = 4.0 * PI / SPEED_OF_LIGHT;

/// Pulses kept clear of each aperture end in the azimuth pass, so that the
/// kernel footprint stays mostly inside the record.
pub const AZIMUTH_EDGE_MARGIN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    /// Planar-aperture projection, range scale `1 / cos(theta)`.
    LowRes,
    /// Out-of-plane aware projection, range scale `1 / (cos(theta) cos(phi))`.
    HighRes,
}

/// Range scale factors of every pulse.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingLaw {
    pub mode: ResampleMode,
    pub factors: Vec<f64>,
}

impl ScalingLaw {
    pub fn new(mode: ResampleMode, pulses: &[PulseInfo]) -> Self {
        let factors = pulses
            .iter()
            .map(|p| match mode {
                ResampleMode::LowRes => 1.0 / p.theta.cos(),
                ResampleMode::HighRes => 1.0 / (p.theta.cos() * p.phi.cos()),
            })
            .collect();
        ScalingLaw { mode, factors }
    }
}

/// `u` of the scene centre as seen by one pulse, used to flatten the spectrum
/// before interpolation. The height term is dropped once the first-order step
/// has removed it.
fn reference_projection(info: &PulseInfo, scene: &SceneReference, include_height: bool) -> f64 {
    let cp = info.phi.cos();
    let base = scene.x_c * cp * info.theta.sin() + scene.y_c * cp * info.theta.cos();
    if include_height {
        base + scene.z_c * info.phi.sin()
    } else {
        base
    }
}

/// Index of the pulse closest to `t = 0`.
pub fn centre_pulse(pulses: &[PulseInfo]) -> usize {
    let mut best = 0;
    for (i, p) in pulses.iter().enumerate() {
        if p.t.abs() < pulses[best].t.abs() {
            best = i;
        }
    }
    best
}

/// Range pass: maps pulse `i`'s frequency `f` onto `f~` through
/// `(fc_bar_i + f) / delta_i = fc_bar_ref + f~`, with `fc_bar_ref` taken at the aperture centre.
pub fn range_resample(ph: &PhaseHistory, mode: ResampleMode) -> Result<PhaseHistory> {
    if ph.stage != PhaseHistoryStage::Preprocessed {
        return Err(SgaError::Ordering("range reformatting applies once, to a preprocessed phase history".into()));
    }
    let law = ScalingLaw::new(mode, &ph.pulses);
    let fc_ref = ph.pulses[centre_pulse(&ph.pulses)].fc_bar;
    let freq = ph.freq;
    let scene = ph.scene;
    let include_height = !ph.first_order_applied;
    let kern = SincInterpolator::shared();

    // band supported by every pulse, clipped to the axis reach
    let mut lo = freq.value(0);
    let mut hi = freq.last();
    for (info, d) in ph.pulses.iter().zip(law.factors.iter()) {
        let band_lo = (info.fc_bar - 0.5 * info.br_bar) / d - fc_ref;
        let band_hi = (info.fc_bar + 0.5 * info.br_bar) / d - fc_ref;
        let axis_lo = (info.fc_bar + freq.value(0)) / d - fc_ref;
        let axis_hi = (info.fc_bar + freq.last()) / d - fc_ref;
        lo = lo.max(band_lo).max(axis_lo);
        hi = hi.min(band_hi).min(axis_hi);
    }
    if hi <= lo {
        return Err(SgaError::Geometry("no range frequencies are common to all pulses".into()));
    }

    let mut data = Array2::<Complex64>::zeros(ph.data.raw_dim());
    data.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(ph.data.axis_iter(Axis(0)).into_par_iter())
        .zip(ph.pulses.par_iter().zip(law.factors.par_iter()))
        .for_each(|((mut out, row), (info, &d))| {
            let u_ref = reference_projection(info, &scene, include_height);
            let flat: Vec<Complex64> = row
                .iter()
                .enumerate()
                .map(|(m, v)| v * Complex64::from_polar(1.0, FOUR_PI_OVER_C * (info.fc_bar + freq.value(m)) * u_ref))
                .collect();
            for (k, o) in out.iter_mut().enumerate() {
                let k_new = (fc_ref + freq.value(k)) * d;
                let q = freq.position(k_new - info.fc_bar);
                *o = kern.sample(&flat, q) * Complex64::from_polar(1.0, -FOUR_PI_OVER_C * k_new * u_ref);
            }
        });
    let mut pulses = ph.pulses.clone();
    for p in pulses.iter_mut() {
        p.fc_bar = fc_ref;
    }
    Ok(PhaseHistory {
        data,
        freq,
        pulses,
        radar: ph.radar,
        scene,
        earth: ph.earth,
        prf: ph.prf,
        stage: PhaseHistoryStage::RangeResampled {
            mode,
            fc_bar_ref: fc_ref,
            band: (lo, hi),
        },
        first_order_applied: ph.first_order_applied,
    })
}

/// Radar angles at the slow time that a reformatted row maps to at `f~ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AzimuthMapSample {
    pub t_tilde: f64,
    pub t: f64,
    pub theta: f64,
    pub phi: f64,
}

/// Uniform wavenumber grid: rows follow `kx`, columns follow `ky`.
#[derive(Clone, Debug)]
pub struct WavenumberData {
    pub data: Array2<Complex64>,
    pub kx: LinearAxis,
    pub ky: LinearAxis,
    pub delta_kx: f64,
    pub delta_ky: f64,
    pub omega: f64,
    pub fc_bar_ref: f64,
    pub mode: ResampleMode,
    pub scene: SceneReference,
    pub earth: EarthModel,
    pub radar: RadarParams,
    pub first_order_applied: bool,
    pub azimuth_map: Vec<AzimuthMapSample>,
}

/// Slow-time grid of the azimuth pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AzimuthGrid {
    pub t_tilde: LinearAxis,
}

/// Largest `t~` interval for which every `f~` column stays inside the aperture.
pub fn plan_azimuth_grid(pulses: &[PulseInfo], freq: &LinearAxis, fc_ref: f64, omega: f64) -> Result<AzimuthGrid> {
    let n = pulses.len();
    if n < 2 * AZIMUTH_EDGE_MARGIN + 3 {
        return Err(SgaError::validation("orbit", "too few pulses for the azimuth pass"));
    }
    if !(omega > 0.0) {
        return Err(SgaError::Geometry("theta must increase through the aperture".into()));
    }
    let tan_lo = pulses[AZIMUTH_EDGE_MARGIN].theta.tan();
    let tan_hi = pulses[n - 1 - AZIMUTH_EDGE_MARGIN].theta.tan();
    let fs = [fc_ref + freq.value(0), fc_ref + freq.last()];
    let lo = fs.iter().map(|f| f * tan_lo / (fc_ref * omega)).fold(f64::NEG_INFINITY, f64::max);
    let hi = fs.iter().map(|f| f * tan_hi / (fc_ref * omega)).fold(f64::INFINITY, f64::min);
    if hi <= lo {
        return Err(SgaError::Geometry("empty slow-time support".into()));
    }
    Ok(AzimuthGrid {
        t_tilde: LinearAxis::new(lo, (hi - lo) / (n as f64 - 1.0), n),
    })
}

/// Azimuth pass: solves `tan(theta(t)) = fc_bar_ref Omega t~ / (fc_bar_ref + f~)` per column
/// and interpolates each column onto the uniform `t~` grid.
pub fn azimuth_resample(ph_r: &PhaseHistory, omega: f64) -> Result<WavenumberData> {
    let PhaseHistoryStage::RangeResampled { mode, fc_bar_ref, band } = ph_r.stage else {
        return Err(SgaError::Ordering("azimuth reformatting requires range reformatting first".into()));
    };
    let pulses = &ph_r.pulses;
    let n_p = pulses.len();
    for w in pulses.windows(2) {
        if !(w[1].theta > w[0].theta) {
            return Err(SgaError::Geometry("theta(t) is not strictly increasing".into()));
        }
    }
    let freq = ph_r.freq;
    let grid = plan_azimuth_grid(pulses, &freq, fc_bar_ref, omega)?;
    let tt = grid.t_tilde;
    let index: Vec<f64> = (0..n_p).map(|i| i as f64).collect();
    let theta_of_index = MonotoneCubic::new(index.clone(), pulses.iter().map(|p| p.theta).collect());
    let phi_of_index = MonotoneCubic::new(index.clone(), pulses.iter().map(|p| p.phi).collect());
    let t_of_index = MonotoneCubic::new(index, pulses.iter().map(|p| p.t).collect());
    let tan_theta: Vec<f64> = pulses.iter().map(|p| p.theta.tan()).collect();
    let x_c = ph_r.scene.x_c;
    let kern = SincInterpolator::shared();
    let kx_scale = FOUR_PI_OVER_C * fc_bar_ref * omega;
    const INVERSE_TOL: f64 = 1e-7;

    // columns are processed independently, laid out as rows of the transpose
    let cols = freq.len;
    let mut out_t = Array2::<Complex64>::zeros((cols, n_p));
    let src_t = ph_r.data.t().to_owned();
    let misses: usize = out_t
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(k, mut out)| {
            let f_sum = fc_bar_ref + freq.value(k);
            let col = src_t.row(k);
            let flat: Vec<Complex64> = if x_c != 0.0 {
                col.iter()
                    .zip(tan_theta.iter())
                    .map(|(v, tn)| v * Complex64::from_polar(1.0, FOUR_PI_OVER_C * f_sum * x_c * tn))
                    .collect()
            } else {
                col.to_vec()
            };
            let mut miss = 0;
            for (l, o) in out.iter_mut().enumerate() {
                let kx = kx_scale * tt.value(l);
                let target = (kx / (FOUR_PI_OVER_C * f_sum)).atan();
                match theta_of_index.invert(target, INVERSE_TOL) {
                    Some(p) => {
                        let mut v = kern.sample(&flat, p);
                        if x_c != 0.0 {
                            v *= Complex64::from_polar(1.0, -kx * x_c);
                        }
                        *o = v;
                    }
                    None => miss += 1,
                }
            }
            miss
        })
        .sum();
    if misses > 0 {
        warn!("{misses} reformatted samples fall outside the aperture and were zero-filled");
    }
    let data = out_t.t().as_standard_layout().to_owned();

    let azimuth_map = (0..n_p)
        .map(|l| {
            let t_tilde = tt.value(l);
            let theta = (omega * t_tilde).atan();
            let p = theta_of_index.invert(theta, INVERSE_TOL).unwrap_or(if theta < 0.0 { 0.0 } else { (n_p - 1) as f64 });
            AzimuthMapSample {
                t_tilde,
                t: t_of_index.eval(p),
                theta,
                phi: phi_of_index.eval(p),
            }
        })
        .collect();

    let ky = LinearAxis::new(FOUR_PI_OVER_C * (fc_bar_ref + freq.start), FOUR_PI_OVER_C * freq.step, freq.len);
    let kx = LinearAxis::new(kx_scale * tt.start, kx_scale * tt.step, n_p);
    Ok(WavenumberData {
        data,
        kx,
        ky,
        delta_kx: kx.last() - kx.start,
        delta_ky: FOUR_PI_OVER_C * (band.1 - band.0),
        omega,
        fc_bar_ref,
        mode,
        scene: ph_r.scene,
        earth: ph_r.earth,
        radar: ph_r.radar,
        first_order_applied: ph_r.first_order_applied,
        azimuth_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::FreqAxis;

    fn pulses(n: usize, rate: f64, phi_amp: f64) -> Vec<PulseInfo> {
        (0..n)
            .map(|i| {
                let t = (i as f64 - (n / 2) as f64) * 0.01;
                PulseInfo {
                    t,
                    theta: rate * t,
                    phi: phi_amp * t * t,
                    a: -2.0,
                    fc_bar: 1.0e10,
                    br_bar: 1.0e8,
                }
            })
            .collect()
    }

    fn history(p: Vec<PulseInfo>, nf: usize) -> PhaseHistory {
        let n_p = p.len();
        PhaseHistory {
            data: Array2::from_shape_fn((n_p, nf), |(i, k)| Complex64::from_polar(1.0, 0.01 * (i * k) as f64)),
            freq: FreqAxis::centred(0.0, 1.25e8 / nf as f64, nf),
            pulses: p,
            radar: RadarParams {
                fc: 5e9,
                bandwidth: 5e7,
                pulse_duration: 1e-5,
                fs: 6.25e7,
            },
            scene: SceneReference {
                x_c: 0.0,
                y_c: 5.9e6,
                z_c: 2.4e6,
            },
            earth: EarthModel::default(),
            prf: 100.0,
            stage: PhaseHistoryStage::Preprocessed,
            first_order_applied: false,
        }
    }

    #[test]
    fn broadside_pulse_is_unchanged() {
        let ph = history(pulses(41, 0.0, 0.0), 64);
        let out = range_resample(&ph, ResampleMode::LowRes).unwrap();
        for (a, b) in out.data.iter().zip(ph.data.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn modes_agree_bitwise_without_elevation() {
        let ph = history(pulses(41, 1e-3, 0.0), 64);
        let lo = range_resample(&ph, ResampleMode::LowRes).unwrap();
        let hi = range_resample(&ph, ResampleMode::HighRes).unwrap();
        assert!(lo.data.iter().zip(hi.data.iter()).all(|(a, b)| a == b));
    }

    #[test]
    fn scaling_law_factors() {
        let p = pulses(5, 0.5, 10.0);
        let lo = ScalingLaw::new(ResampleMode::LowRes, &p);
        let hi = ScalingLaw::new(ResampleMode::HighRes, &p);
        for ((a, b), q) in lo.factors.iter().zip(hi.factors.iter()).zip(p.iter()) {
            assert_eq!(*a, 1.0 / q.theta.cos());
            assert_eq!(*b, 1.0 / (q.theta.cos() * q.phi.cos()));
        }
    }

    #[test]
    fn azimuth_pass_requires_range_pass() {
        let ph = history(pulses(41, 1e-3, 0.0), 64);
        assert!(matches!(azimuth_resample(&ph, 1e-3), Err(SgaError::Ordering(_))));
        let r = range_resample(&ph, ResampleMode::LowRes).unwrap();
        assert!(matches!(range_resample(&r, ResampleMode::LowRes), Err(SgaError::Ordering(_))));
        assert!(azimuth_resample(&r, 1e-3).is_ok());
    }

    #[test]
    fn centre_column_map_matches_closed_form() {
        let rate = 1e-3;
        let ph = history(pulses(201, rate, 0.0), 32);
        let r = range_resample(&ph, ResampleMode::LowRes).unwrap();
        let w = azimuth_resample(&r, rate).unwrap();
        for m in &w.azimuth_map {
            // theta(t) = rate t, so t~ - t = (tan(theta) - theta) / rate
            let expect = (m.theta.tan() - m.theta) / rate;
            assert!(((m.t_tilde - m.t) - expect).abs() < 1e-6 * 0.01);
        }
        assert!((w.delta_kx - (w.kx.last() - w.kx.start)).abs() < 1e-12 * w.delta_kx);
    }

    #[test]
    fn kx_grid_is_uniform() {
        let ph = history(pulses(101, 1e-3, 0.0), 32);
        let r = range_resample(&ph, ResampleMode::LowRes).unwrap();
        let w = azimuth_resample(&r, 1e-3).unwrap();
        let step = w.kx.step;
        for l in 1..w.kx.len {
            assert!(((w.kx.value(l) - w.kx.value(l - 1)) - step).abs() < 1e-9 * step.abs());
        }
        assert!(w.kx.start < 0.0 && w.kx.last() > 0.0);
    }
}
