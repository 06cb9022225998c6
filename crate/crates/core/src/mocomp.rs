//! Out-of-plane motion compensation.
//!
//! When the radar leaves the imaging plane (`phi != 0`) every sample picks up the
//! extra term `-k_r z sin(phi)`. The first-order step removes it exactly at the
//! scene centre before reformatting; the second-order step removes the range
//! dependent remainder after range compression, using the mapping from the
//! reformatted slow-time axis back to the radar angles.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::warn;
use ndarray::Axis;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::echo_sim::RadarParams;
use crate::error::{Result, SgaError};
use crate::geometry::{slant_range, surface_height, EarthModel, GroundPoint, Trajectory, SPEED_OF_LIGHT};
use crate::image_formation::RangeCompressed;
use crate::preprocess::{PhaseHistory, PhaseHistoryStage};

const FOUR_PI_OVER_C: f64 = 4.0 * PI / SPEED_OF_LIGHT;

/// Scene centre in projection coordinates with its surface height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneReference {
    pub x_c: f64,
    pub y_c: f64,
    pub z_c: f64,
}

impl SceneReference {
    pub fn new(x_c: f64, y_c: f64, earth_radius: f64) -> Result<Self> {
        let z_c = surface_height(x_c, y_c, earth_radius)
            .ok_or_else(|| SgaError::validation("scene", "scene centre lies outside the Earth disc"))?;
        Ok(SceneReference { x_c, y_c, z_c })
    }

    pub fn point(&self) -> GroundPoint {
        GroundPoint {
            x: self.x_c,
            y: self.y_c,
            z: self.z_c,
            on_surface: true,
        }
    }
}

/// Out-of-plane phase `-(4 pi / c)(fc_bar + f_r) z sin(phi)` for a pulse at elevation `phi`.
pub fn phase_error_at(phi: f64, f_r: f64, p: &GroundPoint, fc_bar: f64, earth_radius: f64) -> Result<f64> {
    let z = surface_height(p.x, p.y, earth_radius)
        .ok_or_else(|| SgaError::Geometry("point outside the Earth disc".into()))?;
    Ok(-FOUR_PI_OVER_C * (fc_bar + f_r) * z * phi.sin())
}

/// [`phase_error_at`] with `phi(t)` taken from the trajectory.
pub fn phase_error(t: f64, f_r: f64, p: &GroundPoint, traj: &Trajectory, fc_bar: f64, earth_radius: f64) -> Result<f64> {
    let phi = traj.phi_curve().eval(t);
    phase_error_at(phi, f_r, p, fc_bar, earth_radius)
}

/// Phase of the first-order correction at one sample.
pub fn first_order_phase(phi: f64, f_r: f64, fc_bar: f64, z_c: f64) -> f64 {
    FOUR_PI_OVER_C * (fc_bar + f_r) * z_c * phi.sin()
}

/// Removes the out-of-plane phase of the scene centre from every sample.
pub fn first_order_comp(ph: &PhaseHistory) -> Result<PhaseHistory> {
    if ph.stage != PhaseHistoryStage::Preprocessed {
        return Err(SgaError::Ordering("first-order compensation must precede reformatting".into()));
    }
    if ph.first_order_applied {
        return Err(SgaError::Ordering("first-order compensation already applied".into()));
    }
    let mut out = ph.clone();
    let z_c = ph.scene.z_c;
    let freq = ph.freq;
    out.data
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(ph.pulses.par_iter())
        .for_each(|(mut row, info)| {
            if info.phi == 0.0 {
                return;
            }
            for (k, v) in row.iter_mut().enumerate() {
                *v *= Complex64::from_polar(1.0, first_order_phase(info.phi, freq.value(k), info.fc_bar, z_c));
            }
        });
    out.first_order_applied = true;
    Ok(out)
}

/// Phase of the second-order correction for a range row at `y` and a slow-time row
/// with radar angles `(theta, phi)`. `None` when `(x_c, y)` is off the sphere.
pub fn second_order_phase(y: f64, theta: f64, phi: f64, scene: &SceneReference, fc_bar_ref: f64, earth_radius: f64) -> Option<f64> {
    let z = surface_height(scene.x_c, y, earth_radius)?;
    Some(FOUR_PI_OVER_C * fc_bar_ref * (z - scene.z_c) * phi.tan() / theta.cos())
}

/// Removes the range-dependent out-of-plane residual in the `(slow time, y)` domain.
pub fn second_order_comp(rc: &RangeCompressed) -> Result<RangeCompressed> {
    if rc.second_order_applied {
        return Err(SgaError::Ordering("second-order compensation already applied".into()));
    }
    let mut out = rc.clone();
    let scene = rc.scene;
    let r0 = rc.earth.radius;
    let fc = rc.fc_bar_ref;
    let y_axis = rc.y_axis;
    let outside = (0..y_axis.len)
        .filter(|&m| surface_height(scene.x_c, y_axis.value(m), r0).is_none())
        .count();
    if outside > 0 {
        warn!("{outside} range rows lie outside the Earth disc; second-order correction skipped there");
    }
    out.data
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(rc.azimuth_map.par_iter())
        .for_each(|(mut row, map)| {
            if map.phi == 0.0 {
                return;
            }
            for (m, v) in row.iter_mut().enumerate() {
                if let Some(p) = second_order_phase(y_axis.value(m), map.theta, map.phi, &scene, fc, r0) {
                    *v *= Complex64::from_polar(1.0, p);
                }
            }
        });
    out.second_order_applied = true;
    Ok(out)
}

/// Scene rectangle in projection coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneExtent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl SceneExtent {
    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x_min, self.y_min),
            (self.x_min, self.y_max),
            (self.x_max, self.y_min),
            (self.x_max, self.y_max),
        ]
    }
}

/// Magnitudes of out-of-plane effects over a scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    /// Largest `|phi|` over the aperture [rad].
    pub max_abs_phi: f64,
    /// Phase slope along `x` at the scene centre for the worst pulse [rad/m].
    pub azimuth_derivative: f64,
    /// Phase slope along `y` at the scene centre for the worst pulse [rad/m].
    pub range_derivative: f64,
    /// Largest uncompensated out-of-plane phase over the corners [rad].
    pub peak_phase_error: f64,
    /// Largest residual after the first-order step [rad].
    pub residual_after_first_order: f64,
    /// Largest residual after both steps [rad].
    pub residual_after_second_order: f64,
    /// Largest residual range migration after the first-order step [m].
    pub residual_migration: f64,
    /// Range resolution cell in `u` [m].
    pub range_cell: f64,
    /// Residual after the first-order step exceeds pi/4.
    pub second_order_required: bool,
    /// Residual range migration is below one cell.
    pub migration_negligible: bool,
}

/// Evaluates the out-of-plane error model over the scene corners and aperture.
pub fn error_budget(traj: &Trajectory, radar: &RadarParams, earth: &EarthModel, scene: &SceneReference, extent: &SceneExtent) -> Result<ErrorBudget> {
    radar.validate()?;
    let centre = scene.point();
    let r_ref = slant_range(traj.center(), &centre);
    let scale = traj.center().radius / r_ref;
    let fc_bar = scale * radar.fc;
    let br_bar = scale * radar.bandwidth;
    let f_top = fc_bar + 0.5 * br_bar;

    let mut worst = traj.center();
    for s in &traj.states {
        if s.phi.abs() > worst.phi.abs() {
            worst = s;
        }
    }
    let sphi = worst.phi.sin();
    let azimuth_derivative = FOUR_PI_OVER_C * fc_bar * sphi * scene.x_c / scene.z_c;
    let range_derivative = FOUR_PI_OVER_C * fc_bar * sphi * scene.y_c / scene.z_c;

    let mut peak = 0.0f64;
    let mut after_first = 0.0f64;
    let mut after_second = 0.0f64;
    let mut migration = 0.0f64;
    for (x, y) in extent.corners() {
        let z = surface_height(x, y, earth.radius)
            .ok_or_else(|| SgaError::validation("scene extent", format!("corner ({x}, {y}) lies outside the Earth disc")))?;
        let z_row = surface_height(scene.x_c, y, earth.radius).unwrap_or(z);
        for s in &traj.states {
            let sp = s.phi.sin().abs();
            peak = peak.max(FOUR_PI_OVER_C * f_top * z * sp);
            after_first = after_first.max(FOUR_PI_OVER_C * fc_bar * (z - scene.z_c).abs() * sp);
            after_second = after_second.max(FOUR_PI_OVER_C * fc_bar * (z - z_row).abs() * (s.phi.tan() / s.theta.cos()).abs());
            migration = migration.max((z - scene.z_c).abs() * sp);
        }
    }
    let range_cell = SPEED_OF_LIGHT / (2.0 * br_bar);
    Ok(ErrorBudget {
        max_abs_phi: worst.phi.abs(),
        azimuth_derivative,
        range_derivative,
        peak_phase_error: peak,
        residual_after_first_order: after_first,
        residual_after_second_order: after_second,
        residual_migration: migration,
        range_cell,
        second_order_required: after_first > PI / 4.0,
        migration_negligible: migration < range_cell,
    })
}

impl ErrorBudget {
    pub fn key_values(&self) -> String {
        let mut s = String::new();
        writeln!(s, "max_abs_phi_rad={:.6e}", self.max_abs_phi).unwrap();
        writeln!(s, "azimuth_derivative_rad_per_m={:.6e}", self.azimuth_derivative).unwrap();
        writeln!(s, "range_derivative_rad_per_m={:.6e}", self.range_derivative).unwrap();
        writeln!(s, "peak_phase_error_rad={:.6e}", self.peak_phase_error).unwrap();
        writeln!(s, "residual_after_first_order_rad={:.6e}", self.residual_after_first_order).unwrap();
        writeln!(s, "residual_after_second_order_rad={:.6e}", self.residual_after_second_order).unwrap();
        writeln!(s, "residual_migration_m={:.6e}", self.residual_migration).unwrap();
        writeln!(s, "range_cell_m={:.6e}", self.range_cell).unwrap();
        writeln!(s, "second_order_required={}", self.second_order_required).unwrap();
        writeln!(s, "migration_negligible={}", self.migration_negligible).unwrap();
        s
    }

    pub fn report(&self) -> String {
        let mut s = String::from("Out-of-plane error budget\n");
        writeln!(s, "  max |phi| over aperture        {:>14.4e} rad", self.max_abs_phi).unwrap();
        writeln!(s, "  phase slope along x (centre)   {:>14.4e} rad/m", self.azimuth_derivative).unwrap();
        writeln!(s, "  phase slope along y (centre)   {:>14.4e} rad/m", self.range_derivative).unwrap();
        writeln!(s, "  peak phase error (corners)     {:>14.4e} rad", self.peak_phase_error).unwrap();
        writeln!(s, "  residual after first order     {:>14.4e} rad", self.residual_after_first_order).unwrap();
        writeln!(s, "  residual after second order    {:>14.4e} rad", self.residual_after_second_order).unwrap();
        writeln!(
            s,
            "  residual range migration       {:>14.4e} m ({:.3e} cells)",
            self.residual_migration,
            self.residual_migration / self.range_cell
        )
        .unwrap();
        writeln!(s, "  second-order step required     {}", self.second_order_required).unwrap();
        writeln!(s, "  migration negligible           {}", self.migration_negligible).unwrap();
        s
    }
}
