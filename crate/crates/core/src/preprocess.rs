//! Pulse compression, fast-time to `u` resampling, the range correction and the
//! conversion to phase-history (wavenumber) form.
//!
//! The `u`-domain record of pulse `i` samples `u_n = u_0 + n du`, the projection
//! of the surface onto the radar line of sight. Each target is a band-limited
//! peak at its own `u` carrying the phase `(4 pi / c) fc_bar u_t` once the range
//! correction is applied. The phase history is the conjugate-domain spectrum of
//! that record, so that every sample follows
//! `exp(-j k_r (x cos(phi) sin(theta) + y cos(phi) cos(theta) + z sin(phi)))` with
//! a positive wavenumber `k_r = (4 pi / c)(fc_bar + f)`.

use std::f64::consts::PI;

use log::warn;
use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::axis::LinearAxis;
use crate::echo_sim::{replica, FastTimeGate, RadarParams, RawData};
use crate::error::{Result, SgaError};
use crate::fft;
use crate::geometry::{r_from_u, slant_range, u_from_r, EarthModel, GroundPoint, Trajectory, SPEED_OF_LIGHT};
use crate::interp::SincInterpolator;
use crate::mocomp::SceneReference;
use crate::polar_format::ResampleMode;

/// Matched-filtered echoes on the original fast-time grid.
#[derive(Clone, Debug)]
pub struct CompressedData {
    pub data: Array2<Complex64>,
    pub gate: FastTimeGate,
    pub radar: RadarParams,
    pub prf: f64,
}

/// Correlates every pulse with the transmitted chirp.
///
/// The output is scaled by the chirp energy, so an isolated echo of amplitude
/// `alpha` compresses to a peak of magnitude `|alpha|` at its round-trip delay.
pub fn pulse_compress(raw: &RawData) -> Result<CompressedData> {
    raw.radar.validate()?;
    let n_fast = raw.gate.samples;
    let (rep, half) = replica(&raw.radar);
    let energy: f64 = rep.iter().map(|v| v.norm_sqr()).sum();
    let len = fft::padded_len(n_fast + rep.len(), 1);
    let fwd = fft::forward(len);
    let inv = fft::inverse(len);

    let mut h = vec![Complex64::new(0.0, 0.0); len];
    for (k, v) in rep.iter().enumerate() {
        let m = k as isize - half as isize;
        h[m.rem_euclid(len as isize) as usize] = *v;
    }
    fwd.process(&mut h);
    let scale = 1.0 / (len as f64 * energy);
    let filter: Vec<Complex64> = h.iter().map(|v| v.conj() * scale).collect();

    let mut data = Array2::<Complex64>::zeros((raw.data.nrows(), n_fast));
    data.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(raw.data.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, row)| {
            let mut buf = vec![Complex64::new(0.0, 0.0); len];
            for (b, v) in buf.iter_mut().zip(row.iter()) {
                *b = *v;
            }
            fwd.process(&mut buf);
            for (b, f) in buf.iter_mut().zip(filter.iter()) {
                *b *= f;
            }
            inv.process(&mut buf);
            for (o, b) in out.iter_mut().zip(buf.iter()) {
                *o = *b;
            }
        });
    Ok(CompressedData {
        data,
        gate: raw.gate,
        radar: raw.radar,
        prf: raw.prf,
    })
}

/// Grid of `u` samples.
pub type UAxis = LinearAxis;
/// Range-frequency axis of a phase history.
pub type FreqAxis = LinearAxis;

/// `u` grid that is the image of the receive gate for a radar at the centre
/// radius, sampled `oversample` times denser than the gate.
pub fn u_axis_from_gate(gate: &FastTimeGate, fs: f64, traj: &Trajectory, earth: &EarthModel, oversample: f64) -> Result<UAxis> {
    if !(oversample > 0.0) {
        return Err(SgaError::validation("processing.u_oversample", "must be positive"));
    }
    let radius = traj.center().radius;
    let r_near = 0.5 * SPEED_OF_LIGHT * gate.start;
    let r_far = 0.5 * SPEED_OF_LIGHT * gate.end(fs);
    let u_hi = u_from_r(r_near, radius, earth.radius);
    let u_lo = u_from_r(r_far, radius, earth.radius);
    let len = ((gate.samples as f64) * oversample).round() as usize;
    if len < 2 {
        return Err(SgaError::validation("gate.samples", "too few samples"));
    }
    Ok(LinearAxis::new(u_lo, (u_hi - u_lo) / (len as f64 - 1.0), len))
}

/// Per-pulse geometry and scaling carried with the data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseInfo {
    pub t: f64,
    pub theta: f64,
    pub phi: f64,
    /// Signed range-to-`u` scale, `-R / r_ref` for the scene-centre range `r_ref`.
    pub a: f64,
    /// Scaled carrier `|a| fc`.
    pub fc_bar: f64,
    /// Scaled bandwidth `|a| Br`.
    pub br_bar: f64,
}

/// Pulse-compressed data on the `u` grid.
#[derive(Clone, Debug)]
pub struct UDomainData {
    pub data: Array2<Complex64>,
    pub u_axis: UAxis,
    pub pulses: Vec<PulseInfo>,
    pub radar: RadarParams,
    pub scene: SceneReference,
    pub earth: EarthModel,
    pub prf: f64,
    pub range_corrected: bool,
    /// `u` samples whose round-trip delay fell outside the gate.
    pub uncovered_samples: usize,
}

/// Builds the per-pulse table for `traj` relative to the scene centre.
pub fn pulse_table(traj: &Trajectory, radar: &RadarParams, scene: &SceneReference) -> Vec<PulseInfo> {
    let centre = scene.point();
    traj.states
        .iter()
        .map(|s| {
            let r_ref = slant_range(s, &centre);
            let a = -s.radius / r_ref;
            PulseInfo {
                t: s.t,
                theta: s.theta,
                phi: s.phi,
                a,
                fc_bar: a.abs() * radar.fc,
                br_bar: a.abs() * radar.bandwidth,
            }
        })
        .collect()
}

const EDGE_SLACK: f64 = 1e-6;

/// Interpolates every compressed pulse onto the `u` grid through `r(u)`.
pub fn resample_to_u(
    comp: &CompressedData,
    traj: &Trajectory,
    earth: &EarthModel,
    u_axis: &UAxis,
    scene: &SceneReference,
) -> Result<UDomainData> {
    if traj.len() != comp.data.nrows() {
        return Err(SgaError::Geometry(format!(
            "trajectory has {} samples but data has {} pulses",
            traj.len(),
            comp.data.nrows()
        )));
    }
    let kern = SincInterpolator::shared();
    let fs = comp.radar.fs;
    let n_fast = comp.gate.samples as f64;
    let mut data = Array2::<Complex64>::zeros((traj.len(), u_axis.len));
    let uncovered: usize = data
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(comp.data.axis_iter(Axis(0)).into_par_iter())
        .zip(traj.states.par_iter())
        .map(|((mut out, row), state)| {
            let row = row.as_slice().expect("contiguous row");
            let mut miss = 0;
            for (n, o) in out.iter_mut().enumerate() {
                let u = u_axis.value(n);
                let Ok(r) = r_from_u(u, state.radius, earth.radius) else {
                    miss += 1;
                    continue;
                };
                let pos = (2.0 * r / SPEED_OF_LIGHT - comp.gate.start) * fs;
                // the grid ends map onto the gate ends up to rounding
                if pos < -EDGE_SLACK || pos > n_fast - 1.0 + EDGE_SLACK {
                    miss += 1;
                    continue;
                }
                *o = kern.sample(row, pos.clamp(0.0, n_fast - 1.0));
            }
            miss
        })
        .sum();
    if uncovered > 0 {
        warn!("{uncovered} u samples map outside the receive gate and were zero-filled");
    }
    Ok(UDomainData {
        data,
        u_axis: *u_axis,
        pulses: pulse_table(traj, &comp.radar, scene),
        radar: comp.radar,
        scene: *scene,
        earth: *earth,
        prf: comp.prf,
        range_corrected: false,
        uncovered_samples: uncovered,
    })
}

/// Phase of the range correction at one `u` sample.
///
/// Uses the signed scale `a`, so `fc_signed = a fc` is negative for a real geometry.
pub fn range_correction_phase(fc: f64, r: f64, a: f64, u: f64) -> f64 {
    4.0 * PI / SPEED_OF_LIGHT * (fc * r - a * fc * u)
}

/// Multiplies every `u` sample by `exp(j (4 pi / c)(fc r(u) - a fc u))`.
pub fn apply_h1(ud: &UDomainData, traj: &Trajectory) -> Result<UDomainData> {
    let mut out = ud.clone();
    apply_range_correction(&mut out, traj, false)?;
    out.range_corrected = true;
    Ok(out)
}

/// Multiplies by the conjugate of the range correction, undoing [`apply_h1`].
pub fn remove_h1(ud: &UDomainData, traj: &Trajectory) -> Result<UDomainData> {
    let mut out = ud.clone();
    apply_range_correction(&mut out, traj, true)?;
    out.range_corrected = false;
    Ok(out)
}

fn apply_range_correction(ud: &mut UDomainData, traj: &Trajectory, conjugate: bool) -> Result<()> {
    if traj.len() != ud.data.nrows() {
        return Err(SgaError::Geometry("trajectory and data lengths differ".into()));
    }
    let fc = ud.radar.fc;
    let r0 = ud.earth.radius;
    let axis = ud.u_axis;
    let sign = if conjugate { -1.0 } else { 1.0 };
    ud.data
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(traj.states.par_iter())
        .zip(ud.pulses.par_iter())
        .for_each(|((mut row, state), info)| {
            for (n, v) in row.iter_mut().enumerate() {
                let u = axis.value(n);
                if let Ok(r) = r_from_u(u, state.radius, r0) {
                    *v *= Complex64::from_polar(1.0, sign * range_correction_phase(fc, r, info.a, u));
                }
            }
        });
    Ok(())
}

/// Processing stage of a phase history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhaseHistoryStage {
    /// Directly after the range FFT.
    Preprocessed,
    /// After range reformatting onto the common reference carrier `fc_bar_ref`.
    RangeResampled {
        mode: ResampleMode,
        fc_bar_ref: f64,
        /// Frequency interval `[lo, hi]` of the new axis supported by every pulse.
        band: (f64, f64),
    },
}

/// Conjugate-domain spectra, one row per pulse.
#[derive(Clone, Debug)]
pub struct PhaseHistory {
    pub data: Array2<Complex64>,
    pub freq: FreqAxis,
    pub pulses: Vec<PulseInfo>,
    pub radar: RadarParams,
    pub scene: SceneReference,
    pub earth: EarthModel,
    pub prf: f64,
    pub stage: PhaseHistoryStage,
    pub first_order_applied: bool,
}

impl PhaseHistory {
    /// Wavenumber `(4 pi / c)(fc_bar_i + f_k)` of sample `(i, k)`.
    pub fn wavenumber(&self, i: usize, k: usize) -> f64 {
        4.0 * PI / SPEED_OF_LIGHT * (self.pulses[i].fc_bar + self.freq.value(k))
    }
}

/// Conjugates each `u` record and takes its spectrum with the absolute `u` origin.
pub fn to_phase_history(ud: &UDomainData) -> Result<PhaseHistory> {
    if !ud.range_corrected {
        return Err(SgaError::Ordering("range correction must precede the range FFT".into()));
    }
    let n = ud.u_axis.len;
    let dtau = 2.0 * ud.u_axis.step / SPEED_OF_LIGHT;
    let df = 1.0 / (n as f64 * dtau);
    let freq = FreqAxis::centred(0.0, df, n);
    let tau0 = 2.0 * ud.u_axis.start / SPEED_OF_LIGHT;
    let origin: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, -2.0 * PI * freq.value(k) * tau0))
        .collect();
    let plan = fft::forward(n);
    let mut data = ud.data.mapv(|v| v.conj());
    data.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut row| {
        let mut buf: Vec<Complex64> = row.iter().copied().collect();
        plan.process(&mut buf);
        fft::fftshift(&mut buf);
        for ((o, b), w) in row.iter_mut().zip(buf.iter()).zip(origin.iter()) {
            *o = b * w;
        }
    });
    Ok(PhaseHistory {
        data,
        freq,
        pulses: ud.pulses.clone(),
        radar: ud.radar,
        scene: ud.scene,
        earth: ud.earth,
        prf: ud.prf,
        stage: PhaseHistoryStage::Preprocessed,
        first_order_applied: false,
    })
}

/// Phase residual of a phase history against the ideal single-target model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseValidation {
    pub rmse: f64,
    pub max_abs: f64,
    pub samples: usize,
}

fn unwrap_in_place(v: &mut [f64]) {
    for k in 1..v.len() {
        let d = v[k] - v[k - 1];
        let wrapped = d - 2.0 * PI * (d / (2.0 * PI)).round();
        v[k] = v[k - 1] + wrapped;
    }
}

/// Compares measured phases with `-k_r (p . los) + arg(alpha)` over the central
/// `band_fraction` of each pulse's band.
///
/// The residual is unwrapped along frequency for each pulse and then tied across
/// pulses at the band centre; only a multiple of `2 pi` is removed globally.
pub fn validate_phase_history(ph: &PhaseHistory, target: &GroundPoint, alpha: Complex64, band_fraction: f64) -> Result<PhaseValidation> {
    if ph.stage != PhaseHistoryStage::Preprocessed {
        return Err(SgaError::Ordering("validation applies to the phase history before reformatting".into()));
    }
    let n_p = ph.data.nrows();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_p);
    let mut centre_idx: Vec<usize> = Vec::with_capacity(n_p);
    for i in 0..n_p {
        let info = &ph.pulses[i];
        let cp = info.phi.cos();
        let proj = target.x * cp * info.theta.sin() + target.y * cp * info.theta.cos() + target.z * info.phi.sin();
        let half = 0.5 * band_fraction * info.br_bar;
        let k_lo = ph.freq.position(-half).ceil().max(0.0) as usize;
        let k_hi = (ph.freq.position(half).floor() as usize).min(ph.freq.len - 1);
        if k_hi <= k_lo {
            return Err(SgaError::validation("band_fraction", "band holds no samples"));
        }
        let mut res: Vec<f64> = (k_lo..=k_hi)
            .map(|k| {
                let model = -ph.wavenumber(i, k) * proj;
                (ph.data[[i, k]] * Complex64::from_polar(1.0, -model) * alpha.conj()).arg()
            })
            .collect();
        unwrap_in_place(&mut res);
        let kc = ph.freq.position(0.0).round() as usize;
        centre_idx.push(kc.clamp(k_lo, k_hi) - k_lo);
        rows.push(res);
    }
    // tie rows together through the band-centre samples
    let mut centres: Vec<f64> = rows.iter().zip(centre_idx.iter()).map(|(r, &c)| r[c]).collect();
    let raw_centres = centres.clone();
    unwrap_in_place(&mut centres);
    for ((row, c), raw) in rows.iter_mut().zip(centres.iter()).zip(raw_centres.iter()) {
        let shift = c - raw;
        for v in row.iter_mut() {
            *v += shift;
        }
    }
    let all: Vec<f64> = rows.into_iter().flatten().collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let offset = 2.0 * PI * (mean / (2.0 * PI)).round();
    let mut sq = 0.0;
    let mut mx: f64 = 0.0;
    for v in &all {
        let d = v - offset;
        sq += d * d;
        mx = mx.max(d.abs());
    }
    Ok(PhaseValidation {
        rmse: (sq / all.len() as f64).sqrt(),
        max_abs: mx,
        samples: all.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
use crate::echo_sim::{simulate_raw, PointTarget};
    use crate::geometry::{RadarState, EARTH_RADIUS};

    fn setup(theta_rate: f64, n_p: usize) -> (Trajectory, RadarParams, SceneReference, EarthModel) {
        let earth = EarthModel {
            radius: EARTH_RADIUS,
            rotation_rate: 0.0,
        };
        let radar = RadarParams {
            fc: 5.0e9,
            bandwidth: 40.0e6,
            pulse_duration: 4.0e-6,
            fs: 50.0e6,
        };
        let c = n_p / 2;
        let states = (0..n_p)
            .map(|i| {
                let t = (i as f64 - c as f64) / 100.0;
                RadarState::from_spherical(t, EARTH_RADIUS + 2.0e6, theta_rate * t, 0.0)
            })
            .collect();
        let traj = Trajectory::new(states, c).unwrap();
        let r_ref = 3.5e6;
        let y_c = u_from_r(r_ref, traj.center().radius, EARTH_RADIUS);
        let scene = SceneReference::new(0.0, y_c, EARTH_RADIUS).unwrap();
        (traj, radar, scene, earth)
    }

    #[test]
    fn compressed_peak_sits_at_round_trip_delay() {
        let (traj, radar, scene, _) = setup(0.0, 3);
        let p = scene.point();
        let gate = FastTimeGate::covering(&traj, &[p], radar.fs, 1024).unwrap();
        let raw = simulate_raw(
            &traj,
            &[PointTarget {
                point: p,
                amplitude: Complex64::new(0.7, 0.0),
            }],
            &radar,
            &gate,
            100.0,
        )
        .unwrap();
        let comp = pulse_compress(&raw).unwrap();
        let row = comp.data.row(1);
        let (imax, vmax) = row.iter().enumerate().max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap()).unwrap();
        let delay = 2.0 * slant_range(&traj.states[1], &p) / SPEED_OF_LIGHT;
        let expected = (delay - gate.start) * radar.fs;
        assert!((imax as f64 - expected).abs() <= 0.5);
        assert!(vmax.norm() <= 0.7 * 1.02);
        // -3 dB width from a fine sinc interpolation of the magnitude
        let kern = SincInterpolator::shared();
        let seg = row.as_slice().unwrap();
        let peak = kern.sample(seg, expected).norm();
        assert!((peak - 0.7).abs() < 0.7 * 0.02, "interpolated peak {peak}");
        let mut hw = [0.0; 2];
        for (s, dir) in [(0usize, -1.0), (1, 1.0)] {
            let mut d = 0.0;
            while kern.sample(seg, expected + dir * d).norm() > peak / 2f64.sqrt() {
                d += 0.001;
            }
            hw[s] = d;
        }
        let width = (hw[0] + hw[1]) / radar.fs;
        let theory = 0.886 / radar.bandwidth;
        assert!((width - theory).abs() < 0.05 * theory, "width {width} vs {theory}");
    }

    #[test]
    fn range_correction_roundtrip_is_exact_and_zero_phase_point() {
        assert_eq!(range_correction_phase(5e9, 2.0, 2.0, 1.0), 0.0);
        let (traj, radar, scene, earth) = setup(1e-3, 8);
        let gate = FastTimeGate::covering(&traj, &[scene.point()], radar.fs, 256).unwrap();
        let axis = u_axis_from_gate(&gate, radar.fs, &traj, &earth, 1.0).unwrap();
        let mut data = Array2::<Complex64>::zeros((8, axis.len));
        for ((i, k), v) in data.indexed_iter_mut() {
            *v = Complex64::new((i * 3 + k) as f64 % 7.0, (k as f64).cos());
        }
        let ud = UDomainData {
            data: data.clone(),
            u_axis: axis,
            pulses: pulse_table(&traj, &radar, &scene),
            radar,
            scene,
            earth,
            prf: 100.0,
            range_corrected: false,
            uncovered_samples: 0,
        };
        let back = remove_h1(&apply_h1(&ud, &traj).unwrap(), &traj).unwrap();
        for (a, b) in back.data.iter().zip(data.iter()) {
            assert!((a - b).norm() < 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn range_fft_requires_correction() {
        let (traj, radar, scene, earth) = setup(1e-3, 4);
        let ud = UDomainData {
            data: Array2::zeros((4, 16)),
            u_axis: UAxis::new(0.0, 1.0, 16),
            pulses: pulse_table(&traj, &radar, &scene),
            radar,
            scene,
            earth,
            prf: 100.0,
            range_corrected: false,
            uncovered_samples: 0,
        };
        assert!(matches!(to_phase_history(&ud), Err(SgaError::Ordering(_))));
    }

    #[test]
    fn scale_factor_matches_geometry() {
        let (traj, radar, scene, _) = setup(1e-3, 9);
        for (info, s) in pulse_table(&traj, &radar, &scene).iter().zip(traj.states.iter()) {
            let r = slant_range(s, &scene.point());
            assert!((info.a.abs() - s.radius / r).abs() < 1e-15 * s.radius / r * 10.0);
            assert!(info.a < 0.0);
        }
    }
}
