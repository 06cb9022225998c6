//! Scenario configuration and end-to-end processing.
//!
//! A [`Scenario`] is read from JSON with unknown keys rejected. [`setup`] turns
//! it into a trajectory, scene reference, target list and receive gate;
//! [`simulate`], [`focus_sga`], [`focus_bp`] and [`evaluate`] run the stages, and [`run`] chains
//! them and writes every artifact plus a manifest into one directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::axis::LinearAxis;
use crate::backprojection::{backproject, ImageGrid};
use crate::echo_sim::{simulate_raw, FastTimeGate, PointTarget, RadarParams, RawData};
use crate::error::{Result, SgaError};
use crate::geometry::{
    build_imaging_frame, generate_orbit, read_trajectory_file, u_from_r, EarthModel, EcefSample, FrameOption, GroundPoint,
    OrbitSpec, Trajectory, SPEED_OF_LIGHT,
};
use crate::image_formation::{azimuth_compress, form_image, range_compress, ComplexImage};
use crate::io;
use crate::metrics::{extract_profile, measure_target, CutAxis, FocusMetrics, CUT_HALF_WIDTH, DEFAULT_OVERSAMPLE};
use crate::mocomp::{error_budget, first_order_comp, second_order_comp, ErrorBudget, SceneExtent, SceneReference};
use crate::polar_format::{azimuth_resample, centre_pulse, plan_azimuth_grid, range_resample, ResampleMode, WavenumberData};
use crate::preprocess::{
    apply_h1, pulse_compress, pulse_table, resample_to_u, to_phase_history, u_axis_from_gate, CompressedData, FreqAxis,
    PhaseHistory,
};

/// Where the radar track comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OrbitSource {
    /// Circular orbit sampled at the PRF.
    Generated(OrbitSpec),
    /// Earth-fixed `t x y z` text file sampled at `prf`.
    File {
        path: PathBuf,
        prf: f64,
        /// Sample that defines the imaging frame; the middle sample when absent.
        #[serde(default)]
        center_index: Option<usize>,
    },
}

/// Scene centre, given by its slant range at the aperture centre and an along-track offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub reference_range_m: f64,
    #[serde(default)]
    pub x_c_m: f64,
}

/// Point target relative to the scene centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// Along-track offset `x - x_c` [m].
    pub azimuth_m: f64,
    /// Slant-range offset from the reference range, seen from the aperture centre [m].
    pub range_m: f64,
    #[serde(default = "unit_amplitude")]
    pub amplitude: f64,
}

fn unit_amplitude() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub n_fast: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessingMode {
    /// In-plane chain without out-of-plane compensation.
    SgaLow,
    /// Full chain with first- and second-order compensation.
    SgaHigh,
    /// Backprojection onto the Fourier image grid around every target.
    Bp,
}

impl std::str::FromStr for ProcessingMode {
    type Err = SgaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sga_low" => Ok(ProcessingMode::SgaLow),
            "sga_high" => Ok(ProcessingMode::SgaHigh),
            "bp" => Ok(ProcessingMode::Bp),
            other => Err(SgaError::validation("processing.mode", format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessingSpec {
    pub mode: ProcessingMode,
    #[serde(default = "default_pad")]
    pub pad: usize,
    #[serde(default = "unit_amplitude")]
    pub u_oversample: f64,
    /// Side of the square backprojection patch around each target [pixels].
    #[serde(default = "default_patch")]
    pub bp_patch_px: usize,
}

fn default_pad() -> usize {
    crate::image_formation::DEFAULT_PAD
}

fn default_patch() -> usize {
    160
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    /// Peak search radius around the true position [pixels].
    #[serde(default = "default_search")]
    pub search_px: usize,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    /// Margin added around the targets for the error budget [m].
    #[serde(default)]
    pub budget_margin_m: f64,
}

fn default_search() -> usize {
    8
}

fn default_oversample() -> usize {
    DEFAULT_OVERSAMPLE
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        EvaluationSpec {
            search_px: default_search(),
            oversample: default_oversample(),
            budget_margin_m: 0.0,
        }
    }
}

/// Complete description of one simulation and processing run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub earth: EarthModel,
    pub radar: RadarParams,
    pub orbit: OrbitSource,
    #[serde(default)]
    pub frame: FrameOption,
    pub scene: SceneSpec,
    pub targets: Vec<TargetSpec>,
    /// Uniform random offset bound applied to both target coordinates [m].
    #[serde(default)]
    pub target_jitter_m: f64,
    #[serde(default)]
    pub seed: u64,
    pub gate: GateSpec,
    pub processing: ProcessingSpec,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SgaError::validation(field, format!("must be positive and finite, got {v}")))
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| SgaError::validation("scenario", e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::from_json(&text)?;
        if let OrbitSource::File { path: p, .. } = &mut s.orbit {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        positive("earth.radius", self.earth.radius)?;
        if !(self.earth.rotation_rate.is_finite() && self.earth.rotation_rate >= 0.0) {
            return Err(SgaError::validation("earth.rotation_rate", "must be non-negative"));
        }
        match &self.orbit {
            OrbitSource::Generated(o) => {
                positive("orbit.altitude", o.altitude)?;
                positive("orbit.duration", o.duration)?;
                positive("orbit.prf", o.prf)?;
                positive("orbit.gravitational_parameter", o.gravitational_parameter)?;
                if self.scene.reference_range_m <= o.altitude {
                    return Err(SgaError::validation("scene.reference_range_m", "must exceed the orbit altitude"));
                }
            }
            OrbitSource::File { prf, .. } => positive("orbit.file.prf", *prf)?,
        }
        positive("scene.reference_range_m", self.scene.reference_range_m)?;
        if !self.scene.x_c_m.is_finite() {
            return Err(SgaError::validation("scene.x_c_m", "must be finite"));
        }
        if self.targets.is_empty() {
            return Err(SgaError::validation("targets", "at least one target is required"));
        }
        for (k, t) in self.targets.iter().enumerate() {
            positive(&format!("targets[{k}].amplitude"), t.amplitude)?;
            if !(t.azimuth_m.is_finite() && t.range_m.is_finite()) {
                return Err(SgaError::validation(format!("targets[{k}]"), "offsets must be finite"));
            }
        }
        if !(self.target_jitter_m.is_finite() && self.target_jitter_m >= 0.0) {
            return Err(SgaError::validation("target_jitter_m", "must be non-negative"));
        }
        if self.gate.n_fast < 16 {
            return Err(SgaError::validation("gate.n_fast", "needs at least 16 samples"));
        }
        if self.processing.pad == 0 {
            return Err(SgaError::validation("processing.pad", "must be at least 1"));
        }
        positive("processing.u_oversample", self.processing.u_oversample)?;
        if self.processing.bp_patch_px < 8 {
            return Err(SgaError::validation("processing.bp_patch_px", "needs at least 8 pixels"));
        }
        if self.evaluation.oversample == 0 {
            return Err(SgaError::validation("evaluation.oversample", "must be at least 1"));
        }
        Ok(())
    }
}

/// Geometry and targets derived from a scenario.
#[derive(Clone, Debug)]
pub struct Setup {
    pub ecef: Vec<EcefSample>,
    pub trajectory: Trajectory,
    pub scene: SceneReference,
    pub targets: Vec<PointTarget>,
    pub gate: FastTimeGate,
    pub prf: f64,
}

impl Setup {
    pub fn target_xy(&self) -> Vec<(f64, f64)> {
        self.targets.iter().map(|t| (t.point.x, t.point.y)).collect()
    }

    /// Bounding box of the targets grown by `margin`.
    pub fn extent(&self, margin: f64) -> SceneExtent {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for t in &self.targets {
            x0 = x0.min(t.point.x);
            x1 = x1.max(t.point.x);
            y0 = y0.min(t.point.y);
            y1 = y1.max(t.point.y);
        }
        SceneExtent {
            x_min: x0 - margin,
            x_max: x1 + margin,
            y_min: y0 - margin,
            y_max: y1 + margin,
        }
    }
}

pub fn setup(s: &Scenario) -> Result<Setup> {
    s.validate()?;
    let (ecef, center, prf) = match &s.orbit {
        OrbitSource::Generated(o) => {
            let (e, c) = generate_orbit(o, &s.earth)?;
            (e, c, o.prf)
        }
        OrbitSource::File { path, prf, center_index } => {
            let e = read_trajectory_file(path)?;
            let c = center_index.unwrap_or(e.len() / 2);
            if c >= e.len() {
                return Err(SgaError::validation("orbit.file.center_index", "beyond the last sample"));
            }
            (e, c, *prf)
        }
    };
    let trajectory = build_imaging_frame(&ecef, center, s.frame)?;
    let radius = trajectory.center().radius;
    let r0 = s.earth.radius;
    let y_of = |r: f64| u_from_r(r, radius, r0);
    let y_c = y_of(s.scene.reference_range_m);
    let scene = SceneReference::new(s.scene.x_c_m, y_c, r0)
        .map_err(|_| SgaError::validation("scene.reference_range_m", "scene centre does not lie on the Earth"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut targets = Vec::with_capacity(s.targets.len());
    for (k, t) in s.targets.iter().enumerate() {
        let (jx, jy) = if s.target_jitter_m > 0.0 {
            (
                rng.gen_range(-s.target_jitter_m..=s.target_jitter_m),
                rng.gen_range(-s.target_jitter_m..=s.target_jitter_m),
            )
        } else {
            (0.0, 0.0)
        };
        let x = s.scene.x_c_m + t.azimuth_m + jx;
        let y = y_of(s.scene.reference_range_m + t.range_m) + jy;
        let point = GroundPoint::on_sphere(x, y, r0)
            .map_err(|_| SgaError::validation(format!("targets[{k}]"), "target does not lie on the Earth"))?;
        targets.push(PointTarget {
            point,
            amplitude: Complex64::new(t.amplitude, 0.0),
        });
    }
    let points: Vec<GroundPoint> = targets.iter().map(|t| t.point).collect();
    let gate = FastTimeGate::covering(&trajectory, &points, s.radar.fs, s.gate.n_fast)?;
    Ok(Setup {
        ecef,
        trajectory,
        scene,
        targets,
        gate,
        prf,
    })
}

/// Wall-clock seconds per named stage, in execution order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes(pub Vec<(String, f64)>);

impl StageTimes {
    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(name));
        let secs = start.elapsed().as_secs_f64();
        info!("stage {name}: {secs:.3} s");
        self.0.push((name.to_string(), secs));
        out
    }

    pub fn total(&self) -> f64 {
        self.0.iter().map(|(_, s)| s).sum()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }
}

pub fn simulate(s: &Scenario, st: &Setup, times: &mut StageTimes) -> Result<RawData> {
    times.time("simulate", || simulate_raw(&st.trajectory, &st.targets, &s.radar, &st.gate, st.prf))
}

/// Products of the Fourier chain; the intermediates are kept only on request.
#[derive(Clone, Debug)]
pub struct FocusProducts {
    pub image: ComplexImage,
    pub compressed: Option<CompressedData>,
    pub phase_history: Option<PhaseHistory>,
    pub wavenumber: Option<WavenumberData>,
}

/// Runs the Fourier chain of `mode` on raw echoes.
pub fn focus_sga(
    s: &Scenario,
    st: &Setup,
    raw: &RawData,
    mode: ProcessingMode,
    keep: bool,
    times: &mut StageTimes,
) -> Result<FocusProducts> {
    let high = match mode {
        ProcessingMode::SgaLow => false,
        ProcessingMode::SgaHigh => true,
        ProcessingMode::Bp => return Err(SgaError::validation("processing.mode", "backprojection is not a Fourier mode")),
    };
    let traj = &st.trajectory;
    let pad = s.processing.pad;
    let comp = times.time("pulse_compress", || pulse_compress(raw))?;
    let u_axis = u_axis_from_gate(&st.gate, s.radar.fs, traj, &s.earth, s.processing.u_oversample)?;
    let ud = times.time("resample_to_u", || resample_to_u(&comp, traj, &s.earth, &u_axis, &st.scene))?;
    let compressed = keep.then_some(comp);
    let ud = times.time("range_correction", || apply_h1(&ud, traj))?;
    let mut ph = times.time("range_fft", || to_phase_history(&ud))?;
    drop(ud);
    if high {
        ph = times.time("first_order_comp", || first_order_comp(&ph))?;
    }
    let phase_history = keep.then(|| ph.clone());
    let law = if high { ResampleMode::HighRes } else { ResampleMode::LowRes };
    let ph_r = times.time("range_resample", || range_resample(&ph, law))?;
    drop(ph);
    let omega = traj.angular_rate();
    let wd = times.time("azimuth_resample", || azimuth_resample(&ph_r, omega))?;
    drop(ph_r);
    let image = if high {
        let rc = times.time("range_compress", || range_compress(&wd, pad))?;
        let rc = times.time("second_order_comp", || second_order_comp(&rc))?;
        times.time("azimuth_compress", || azimuth_compress(&rc, pad))?
    } else {
        times.time("form_image", || form_image(&wd, pad, false))?
    };
    Ok(FocusProducts {
        image,
        compressed,
        phase_history,
        wavenumber: keep.then_some(wd),
    })
}

/// Image grid the Fourier chain produces for this scenario, computed without running it.
pub fn planned_grid(s: &Scenario, st: &Setup) -> Result<ImageGrid> {
    let traj = &st.trajectory;
    let pad = s.processing.pad.max(2);
    let u_axis = u_axis_from_gate(&st.gate, s.radar.fs, traj, &s.earth, s.processing.u_oversample)?;
    let n = u_axis.len;
    let dtau = 2.0 * u_axis.step / SPEED_OF_LIGHT;
    let freq = FreqAxis::centred(0.0, 1.0 / (n as f64 * dtau), n);
    let four_pi_c = 4.0 * std::f64::consts::PI / SPEED_OF_LIGHT;
    let m_y = crate::fft::padded_len(n, pad);
    let dy = 2.0 * std::f64::consts::PI / (m_y as f64 * four_pi_c * freq.step);
    let pulses = pulse_table(traj, &s.radar, &st.scene);
    let fc_ref = pulses[centre_pulse(&pulses)].fc_bar;
    let omega = traj.angular_rate();
    let grid = plan_azimuth_grid(&pulses, &freq, fc_ref, omega)?;
    let n_t = pulses.len();
    let m_x = crate::fft::padded_len(n_t, pad);
    let dx = 2.0 * std::f64::consts::PI / (m_x as f64 * four_pi_c * fc_ref * omega * grid.t_tilde.step);
    Ok(ImageGrid {
        x_axis: LinearAxis::centred(st.scene.x_c, dx, m_x),
        y_axis: LinearAxis::centred(st.scene.y_c, dy, m_y),
    })
}

/// Square patch of `size` pixels of `grid`, centred on the node nearest `(x, y)`.
pub fn patch_grid(grid: &ImageGrid, x: f64, y: f64, size: usize) -> Result<(ImageGrid, (usize, usize))> {
    let ix = grid.x_axis.position(x).round() as isize - (size / 2) as isize;
    let iy = grid.y_axis.position(y).round() as isize - (size / 2) as isize;
    if ix < 0 || iy < 0 || ix as usize + size > grid.x_axis.len || iy as usize + size > grid.y_axis.len {
        return Err(SgaError::GridMismatch(format!("patch around ({x}, {y}) leaves the image grid")));
    }
    let (ix, iy) = (ix as usize, iy as usize);
    Ok((
        ImageGrid {
            x_axis: LinearAxis::new(grid.x_axis.value(ix), grid.x_axis.step, size),
            y_axis: LinearAxis::new(grid.y_axis.value(iy), grid.y_axis.step, size),
        },
        (ix, iy),
    ))
}

/// Backprojects square patches around `points` on the nodes of `grid`.
pub fn backproject_patches(
    comp: &CompressedData,
    traj: &Trajectory,
    earth: &EarthModel,
    grid: &ImageGrid,
    points: &[(f64, f64)],
    size: usize,
) -> Result<Vec<(ComplexImage, (usize, usize))>> {
    points
        .iter()
        .map(|&(x, y)| {
            let (g, origin) = patch_grid(grid, x, y, size)?;
            Ok((backproject(comp, traj, &g, earth)?, origin))
        })
        .collect()
}

/// Full-size image on `grid` holding the backprojected patches and zeros elsewhere.
pub fn mosaic(grid: &ImageGrid, patches: &[(ComplexImage, (usize, usize))], delta_k: (f64, f64)) -> ComplexImage {
    let mut data = ndarray::Array2::<Complex64>::zeros((grid.x_axis.len, grid.y_axis.len));
    for (p, (ix, iy)) in patches {
        let (nx, ny) = p.data.dim();
        data.slice_mut(ndarray::s![*ix..ix + nx, *iy..iy + ny]).assign(&p.data);
    }
    ComplexImage {
        data,
        x_axis: grid.x_axis,
        y_axis: grid.y_axis,
        delta_kx: delta_k.0,
        delta_ky: delta_k.1,
    }
}

/// Focuses with backprojection on the planned Fourier grid, patches only.
pub fn focus_bp(s: &Scenario, st: &Setup, raw: &RawData, times: &mut StageTimes) -> Result<ComplexImage> {
    let comp = times.time("pulse_compress", || pulse_compress(raw))?;
    let grid = planned_grid(s, st)?;
    let patches = times.time("backproject", || {
        backproject_patches(&comp, &st.trajectory, &s.earth, &grid, &st.target_xy(), s.processing.bp_patch_px)
    })?;
    Ok(mosaic(&grid, &patches, (0.0, 0.0)))
}

/// Per-target metrics of an image.
pub fn evaluate(s: &Scenario, st: &Setup, img: &ComplexImage) -> Result<Vec<io::TargetReport>> {
    st.targets
        .iter()
        .map(|t| {
            let m = measure_target(img, t.point.x, t.point.y, s.evaluation.search_px, s.evaluation.oversample)?;
            Ok(io::TargetReport {
                true_x: t.point.x,
                true_y: t.point.y,
                metrics: m,
            })
        })
        .collect()
}

pub fn budget(s: &Scenario, st: &Setup) -> Result<ErrorBudget> {
    error_budget(&st.trajectory, &s.radar, &s.earth, &st.scene, &st.extent(s.evaluation.budget_margin_m))
}

/// Tolerances of the image comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareTolerance {
    /// Peak offset, in resolution cells.
    pub peak_cells: f64,
    /// Relative IRW difference.
    pub irw_relative: f64,
    /// Peak phase difference after removing the common phase [rad].
    pub phase_rad: f64,
}

impl Default for CompareTolerance {
    fn default() -> Self {
        CompareTolerance {
            peak_cells: 1.0,
            irw_relative: 0.05,
            phase_rad: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub true_xy: (f64, f64),
    pub a: FocusMetrics,
    pub b: FocusMetrics,
    /// Peak offset along `(x, y)` in units of the IRW of `a`.
    pub peak_offset_cells: (f64, f64),
    /// `(b - a) / a` for `(range, azimuth)` IRW.
    pub irw_relative_delta: (f64, f64),
    /// `arg(b / a)` at the peak pixel of `a`.
    pub raw_phase_difference: f64,
    /// Raw difference minus the circular mean over all targets.
    pub phase_difference: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub tolerance: CompareTolerance,
    pub rows: Vec<CompareRow>,
    pub pass: bool,
}

impl CompareReport {
    pub fn table(&self) -> String {
        let mut s = String::from(
            "true_x,true_y,d_peak_x_cells,d_peak_y_cells,d_irw_rg_rel,d_irw_az_rel,d_pslr_rg,d_pslr_az,phase_rad,raw_phase_rad,pass\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:.4},{:.4},{:.4},{:.4},{:.5},{:.5},{:.3},{:.3},{:.4},{:.4},{}\n",
                r.true_xy.0,
                r.true_xy.1,
                r.peak_offset_cells.0,
                r.peak_offset_cells.1,
                r.irw_relative_delta.0,
                r.irw_relative_delta.1,
                r.b.range.pslr - r.a.range.pslr,
                r.b.azimuth.pslr - r.a.azimuth.pslr,
                r.phase_difference,
                r.raw_phase_difference,
                if r.pass { "PASS" } else { "FAIL" }
            ));
        }
        s
    }
}

fn wrap(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    a - t * (a / t).round()
}

/// Compares the responses of two images on one grid at every target position.
pub fn compare(
    a: &ComplexImage,
    b: &ComplexImage,
    targets: &[(f64, f64)],
    search: usize,
    oversample: usize,
    tol: CompareTolerance,
) -> Result<CompareReport> {
    if !a.same_grid(b) {
        return Err(SgaError::GridMismatch("images are not on the same grid".into()));
    }
    let mut rows = Vec::with_capacity(targets.len());
    let mut phasor = Complex64::new(0.0, 0.0);
    for &(x, y) in targets {
        let ma = measure_target(a, x, y, search, oversample)?;
        let mb = measure_target(b, x, y, search, oversample)?;
        let (i, j) = ma.peak_pixel;
        let va = a.data[[i, j]];
        let vb = b.data[[i, j]];
        let raw = if va.norm() > 0.0 && vb.norm() > 0.0 { (vb * va.conj()).arg() } else { 0.0 };
        phasor += Complex64::from_polar(1.0, raw);
        rows.push(CompareRow {
            true_xy: (x, y),
            a: ma,
            b: mb,
            peak_offset_cells: (
                (mb.peak_xy.0 - ma.peak_xy.0) / ma.azimuth.irw,
                (mb.peak_xy.1 - ma.peak_xy.1) / ma.range.irw,
            ),
            irw_relative_delta: ((mb.range.irw - ma.range.irw) / ma.range.irw, (mb.azimuth.irw - ma.azimuth.irw) / ma.azimuth.irw),
            raw_phase_difference: raw,
            phase_difference: 0.0,
            pass: false,
        });
    }
    let common = if phasor.norm() > 0.0 { phasor.arg() } else { 0.0 };
    for r in rows.iter_mut() {
        r.phase_difference = wrap(r.raw_phase_difference - common);
        r.pass = r.peak_offset_cells.0.abs() <= tol.peak_cells
            && r.peak_offset_cells.1.abs() <= tol.peak_cells
            && r.irw_relative_delta.0.abs() <= tol.irw_relative
            && r.irw_relative_delta.1.abs() <= tol.irw_relative
            && r.phase_difference.abs() < tol.phase_rad;
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(CompareReport { tolerance: tol, rows, pass })
}

/// Writes range and azimuth cuts of both images through each target of `report` as CSV files
/// `profile_<k>_<axis>.csv` with columns `position,a_db,b_db`.
pub fn write_profile_overlays(dir: &Path, a: &ComplexImage, b: &ComplexImage, report: &CompareReport, oversample: usize) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for (k, r) in report.rows.iter().enumerate() {
        for (axis, name) in [(CutAxis::Range, "range"), (CutAxis::Azimuth, "azimuth")] {
            let (centre, half) = match axis {
                CutAxis::Range => (r.a.peak_xy.1, CUT_HALF_WIDTH as f64 * a.y_axis.step.abs()),
                CutAxis::Azimuth => (r.a.peak_xy.0, CUT_HALF_WIDTH as f64 * a.x_axis.step.abs()),
            };
            let pa = extract_profile(a, axis, r.a.peak_pixel, oversample)?.window(centre, half);
            let pb = extract_profile(b, axis, r.a.peak_pixel, oversample)?.window(centre, half);
            let mut s = String::from("position,a_db,b_db\n");
            for (k, (da, db)) in pa.db.iter().zip(pb.db.iter()).enumerate() {
                s.push_str(&format!("{:.6},{da:.4},{db:.4}\n", pa.axis.value(k)));
            }
            let path = dir.join(format!("profile_{k}_{name}.csv"));
            std::fs::write(&path, s)?;
            out.push(path);
        }
    }
    Ok(out)
}

/// Everything the run records about itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub scenario: Scenario,
    pub mode: ProcessingMode,
    pub threads: usize,
    pub derived: BTreeMap<String, f64>,
    pub stage_seconds: StageTimes,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }
}

/// Geometry summary recorded in the manifest.
pub fn derived_parameters(s: &Scenario, st: &Setup) -> BTreeMap<String, f64> {
    let traj = &st.trajectory;
    let mut m = BTreeMap::new();
    m.insert("pulses".into(), traj.len() as f64);
    m.insert("prf_hz".into(), st.prf);
    m.insert("gate_start_s".into(), st.gate.start);
    m.insert("gate_samples".into(), st.gate.samples as f64);
    m.insert("radar_radius_m".into(), traj.center().radius);
    m.insert("angular_rate_rad_s".into(), traj.angular_rate());
    m.insert("max_abs_phi_rad".into(), traj.max_abs_phi());
    m.insert("scene_x_c_m".into(), st.scene.x_c);
    m.insert("scene_y_c_m".into(), st.scene.y_c);
    m.insert("scene_z_c_m".into(), st.scene.z_c);
    let pulses = pulse_table(traj, &s.radar, &st.scene);
    let c = centre_pulse(&pulses);
    m.insert("fc_bar_ref_hz".into(), pulses[c].fc_bar);
    m.insert("br_bar_ref_hz".into(), pulses[c].br_bar);
    for (k, t) in st.targets.iter().enumerate() {
        m.insert(format!("target_{k}_x_m"), t.point.x);
        m.insert(format!("target_{k}_y_m"), t.point.y);
    }
    m
}

/// Options of [`run`] that do not live in the scenario.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    pub mode: Option<ProcessingMode>,
    pub threads: usize,
    pub keep_intermediates: bool,
}

/// Outcome of [`run`].
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub image: ComplexImage,
    pub reports: Vec<io::TargetReport>,
    pub budget: ErrorBudget,
    pub manifest: Manifest,
}

/// Runs `f` on a pool of `threads` workers; zero uses every core.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SgaError::validation("threads", e.to_string()))?;
    Ok(pool.install(f))
}

/// Simulates, focuses and evaluates, writing all artifacts to `opts.output_dir`.
pub fn run(s: &Scenario, opts: &RunOptions) -> Result<RunSummary> {
    with_threads(opts.threads, || run_inner(s, opts))?
}

fn run_inner(s: &Scenario, opts: &RunOptions) -> Result<RunSummary> {
    let mode = opts.mode.unwrap_or(s.processing.mode);
    let dir = &opts.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut times = StageTimes::default();
    let st = times.time("setup", || setup(s))?;
    let bud = times.time("budget", || budget(s, &st))?;
    let raw = simulate(s, &st, &mut times)?;
    let mut artifacts = Vec::new();
    let mut out = |name: &str| {
        artifacts.push(name.to_string());
        dir.join(name)
    };
    times.time("write_raw", || io::write_raw(&out("raw.sgac"), &raw))?;
    let image = match mode {
        ProcessingMode::Bp => focus_bp(s, &st, &raw, &mut times)?,
        _ => {
            let p = focus_sga(s, &st, &raw, mode, opts.keep_intermediates, &mut times)?;
            if let Some(c) = &p.compressed {
                io::write_compressed(&out("compressed.sgac"), c)?;
            }
            if let Some(ph) = &p.phase_history {
                io::write_phase_history(&out("phase_history.sgap"), ph)?;
            }
            if let Some(w) = &p.wavenumber {
                io::write_wavenumber(&out("wavenumber.sgaw"), w)?;
            }
            p.image
        }
    };
    drop(raw);
    times.time("write_image", || {
        io::write_image(&out("image.sgai"), &image)?;
        io::write_png(&out("image.png"), &image, io::PNG_DYNAMIC_RANGE_DB)
    })?;
    let reports = times.time("evaluate", || evaluate(s, &st, &image))?;
    io::write_metrics_csv(&out("metrics.csv"), &reports)?;
    std::fs::write(out("error_budget.txt"), format!("{}\n{}", bud.report(), bud.key_values()))?;
    let manifest_path = out("manifest.json");
    let manifest = Manifest {
        version: crate::VERSION.to_string(),
        scenario: s.clone(),
        mode,
        threads: rayon::current_num_threads(),
        derived: derived_parameters(s, &st),
        stage_seconds: times,
        artifacts,
    };
    std::fs::write(manifest_path, manifest.to_json())?;
    Ok(RunSummary {
        image,
        reports,
        budget: bud,
        manifest,
    })
}
