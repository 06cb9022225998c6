//! Point-target echo simulation with a linear FM pulse under the stop-and-go model.

use log::warn;
use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgaError};
use crate::geometry::{slant_range, GroundPoint, Trajectory, SPEED_OF_LIGHT};

/// Transmitted pulse and receiver sampling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarParams {
    /// Carrier frequency [Hz].
    pub fc: f64,
    /// Chirp bandwidth [Hz].
    pub bandwidth: f64,
    /// Pulse duration [s].
    pub pulse_duration: f64,
    /// Complex sampling rate [Hz].
    pub fs: f64,
}

impl RadarParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("radar.fc", self.fc),
            ("radar.bandwidth", self.bandwidth),
            ("radar.pulse_duration", self.pulse_duration),
            ("radar.fs", self.fs),
        ];
        for (name, v) in checks {
            if !v.is_finite() || v <= 0.0 {
                return Err(SgaError::validation(name, format!("must be positive and finite, got {v}")));
            }
        }
        if self.fs < self.bandwidth {
            return Err(SgaError::validation("radar.fs", "sampling rate below the chirp bandwidth"));
        }
        Ok(())
    }

    pub fn chirp_rate(&self) -> f64 {
        self.bandwidth / self.pulse_duration
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }
}

/// Baseband LFM pulse `exp(j pi K tau^2)` on `|tau| <= Tp/2`.
pub fn baseband_chirp(radar: &RadarParams, tau: f64) -> Complex64 {
    if tau.abs() > 0.5 * radar.pulse_duration {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::from_polar(1.0, std::f64::consts::PI * radar.chirp_rate() * tau * tau)
    }
}

/// Sampled replica centred on `tau = 0`; index `k` holds `tau = (k - half) / fs`.
pub fn replica(radar: &RadarParams) -> (Vec<Complex64>, usize) {
    let half = (0.5 * radar.pulse_duration * radar.fs).floor() as usize;
    let samples = (0..=2 * half)
        .map(|k| baseband_chirp(radar, (k as f64 - half as f64) / radar.fs))
        .collect();
    (samples, half)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointTarget {
    pub point: GroundPoint,
    pub amplitude: Complex64,
}

/// Receive window: sample `n` is taken at `start + n / fs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastTimeGate {
    pub start: f64,
    pub samples: usize,
}

impl FastTimeGate {
    pub fn end(&self, fs: f64) -> f64 {
        self.start + (self.samples as f64 - 1.0) / fs
    }

    /// Gate of `samples` length centred on the span of round-trip delays to `points` over the aperture.
    pub fn covering(traj: &Trajectory, points: &[GroundPoint], fs: f64, samples: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(SgaError::validation("targets", "no points to cover"));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &traj.states {
            for p in points {
                let d = 2.0 * slant_range(s, p) / SPEED_OF_LIGHT;
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        let mid = 0.5 * (lo + hi);
        let start = mid - 0.5 * (samples as f64 - 1.0) / fs;
        Ok(FastTimeGate { start, samples })
    }
}

/// Raw echoes, one row per pulse.
#[derive(Clone, Debug)]
pub struct RawData {
    pub data: Array2<Complex64>,
    pub gate: FastTimeGate,
    pub radar: RadarParams,
    pub prf: f64,
    /// Number of (pulse, target) echoes that were cut by the gate.
    pub truncated_echoes: usize,
}

/// Simulates the sum of delayed chirps, one per target, for every pulse of `traj`.
pub fn simulate_raw(
    traj: &Trajectory,
    targets: &[PointTarget],
    radar: &RadarParams,
    gate: &FastTimeGate,
    prf: f64,
) -> Result<RawData> {
    radar.validate()?;
    if gate.samples == 0 {
        return Err(SgaError::validation("gate.samples", "must be positive"));
    }
    let n_fast = gate.samples;
    let mut data = Array2::<Complex64>::zeros((traj.len(), n_fast));
    let half_tp = 0.5 * radar.pulse_duration;
    let k_rate = radar.chirp_rate();
    let carrier = 4.0 * std::f64::consts::PI * radar.fc / SPEED_OF_LIGHT;
    let truncated: usize = data
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(traj.states.par_iter())
        .map(|(mut row, state)| {
            let mut cut = 0;
            for tg in targets {
                let r = slant_range(state, &tg.point);
                let delay = 2.0 * r / SPEED_OF_LIGHT;
                let first = ((delay - half_tp - gate.start) * radar.fs).ceil();
                let last = ((delay + half_tp - gate.start) * radar.fs).floor();
                if first < 0.0 || last > n_fast as f64 - 1.0 {
                    cut += 1;
                }
                let a = first.max(0.0) as i64;
                let b = last.min(n_fast as f64 - 1.0) as i64;
                if b < a {
                    continue;
                }
                let echo = tg.amplitude * Complex64::from_polar(1.0, -carrier * r);
                for n in a..=b {
                    let tau = gate.start + n as f64 / radar.fs - delay;
                    if tau.abs() <= half_tp {
                        row[n as usize] += echo * Complex64::from_polar(1.0, std::f64::consts::PI * k_rate * tau * tau);
                    }
                }
            }
            cut
        })
        .sum();
    if truncated > 0 {
        warn!("{truncated} echoes extend beyond the receive gate and were truncated");
    }
    Ok(RawData {
        data,
        gate: *gate,
        radar: *radar,
        prf,
        truncated_echoes: truncated,
    })
}
