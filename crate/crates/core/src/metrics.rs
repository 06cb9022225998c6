//! Point-target quality metrics from FFT-oversampled image cuts.

use ndarray::Axis;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::axis::LinearAxis;
use crate::error::{Result, SgaError};
use crate::fft;
use crate::image_formation::ComplexImage;

/// Default oversampling of extracted cuts.
pub const DEFAULT_OVERSAMPLE: usize = 16;
/// Sidelobe window on each side of the main lobe, in first-null distances.
pub const SIDELOBE_CELLS: f64 = 10.0;

/// Direction of a 1-D cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutAxis {
    /// Along `y` (image columns).
    Range,
    /// Along `x` (image rows).
    Azimuth,
}

/// Half length, in image pixels, of the cut segment measured around a target.
pub const CUT_HALF_WIDTH: usize = 64;

/// Normalised magnitude cut in dB.
#[derive(Clone, Debug)]
pub struct Profile {
    pub axis: LinearAxis,
    pub db: Vec<f64>,
}

impl Profile {
    /// Segment within `half_width` (axis units) of `centre`, renormalised to its own peak.
    pub fn window(&self, centre: f64, half_width: f64) -> Profile {
        let a = self.axis.position(centre - half_width).ceil().max(0.0) as usize;
        let b = (self.axis.position(centre + half_width).floor().max(0.0) as usize).min(self.db.len() - 1);
        let seg = &self.db[a..=b.max(a)];
        let top = seg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Profile {
            axis: LinearAxis::new(self.axis.value(a), self.axis.step, seg.len()),
            db: seg.iter().map(|v| v - top).collect(),
        }
    }
}

/// Builds an interpolated copy of `v` by zero-padding its spectrum where it is emptiest,
/// so that band-pass records with an arbitrary carrier are interpolated correctly.
pub fn oversample_magnitude(v: &[Complex64], factor: usize) -> Vec<f64> {
    let n = v.len();
    if factor <= 1 || n < 4 {
        return v.iter().map(|c| c.norm()).collect();
    }
    let mut spectrum = v.to_vec();
    fft::forward(n).process(&mut spectrum);
    let power: Vec<f64> = spectrum.iter().map(|c| c.norm_sqr()).collect();
    let w = (n / 8).max(1);
    let mut sum: f64 = (0..w).map(|k| power[k]).sum();
    let mut best = (sum, 0usize);
    for s in 1..n {
        sum += power[(s + w - 1) % n] - power[s - 1];
        if sum < best.0 {
            best = (sum, s);
        }
    }
    let gap = (best.1 + w / 2) % n;
    // rotate so the gap sits at the highest frequency
    let shift = (n / 2 + n - gap) % n;
    spectrum.rotate_right(shift);
    let m = n * factor;
    let mut padded = vec![Complex64::new(0.0, 0.0); m];
    let half = n / 2;
    padded[..half].copy_from_slice(&spectrum[..half]);
    padded[m - (n - half)..].copy_from_slice(&spectrum[half..]);
    fft::inverse(m).process(&mut padded);
    let scale = 1.0 / n as f64;
    padded.iter().map(|c| c.norm() * scale).collect()
}

fn to_db(mag: &[f64]) -> Vec<f64> {
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    mag.iter()
        .map(|m| if peak > 0.0 { 20.0 * (m / peak).max(1e-30).log10() } else { -600.0 })
        .collect()
}

/// Extracts the cut through pixel `through = (row, col)` along `axis`, oversampled `oversample` times.
pub fn extract_profile(img: &ComplexImage, axis: CutAxis, through: (usize, usize), oversample: usize) -> Result<Profile> {
    let (rows, cols) = img.data.dim();
    let (i, j) = through;
    if i >= rows || j >= cols {
        return Err(SgaError::Metric("cut position outside the image".into()));
    }
    let (line, base): (Vec<Complex64>, LinearAxis) = match axis {
        CutAxis::Range => (img.data.index_axis(Axis(0), i).to_vec(), img.y_axis),
        CutAxis::Azimuth => (img.data.index_axis(Axis(1), j).to_vec(), img.x_axis),
    };
    let k = match axis {
        CutAxis::Range => j,
        CutAxis::Azimuth => i,
    };
    if k == 0 || k + 1 >= line.len() {
        return Err(SgaError::Metric("peak lies on the image boundary".into()));
    }
    let factor = oversample.max(1);
    let mag = oversample_magnitude(&line, factor);
    Ok(Profile {
        axis: LinearAxis::new(base.start, base.step / factor as f64, mag.len()),
        db: to_db(&mag),
    })
}

/// Width, sidelobe and position metrics of one cut.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileMetrics {
    pub irw: f64,
    pub pslr: f64,
    pub islr: f64,
    pub peak_position: f64,
    /// False when nulls were not found or the sidelobe window was clipped.
    pub reliable: bool,
}

fn crossing(db: &[f64], from: usize, to: usize, level: f64) -> f64 {
    // linear interpolation between samples `from` (above level) and `to` (below)
    let a = db[from];
    let b = db[to];
    let t = (a - level) / (a - b);
    from as f64 + t * (to as f64 - from as f64)
}

/// Measures a cut around its highest sample.
pub fn measure(profile: &Profile) -> Result<ProfileMetrics> {
    let db = &profile.db;
    let n = db.len();
    if n < 5 {
        return Err(SgaError::Metric("profile too short".into()));
    }
    let c = db
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, _)| k)
        .unwrap();
    if c == 0 || c + 1 >= n {
        return Err(SgaError::Metric("peak lies on the profile boundary".into()));
    }
    // sub-sample peak from a parabola through the amplitudes
    let amp = |k: usize| 10f64.powf(db[k] / 20.0);
    let (ym, y0, yp) = (amp(c - 1), amp(c), amp(c + 1));
    let denom = ym - 2.0 * y0 + yp;
    let delta = if denom != 0.0 { 0.5 * (ym - yp) / denom } else { 0.0 };
    let peak_position = profile.axis.value(c) + delta * profile.axis.step;

    let level = db[c] - 3.0103;
    let mut l = c;
    while l > 0 && db[l] > level {
        l -= 1;
    }
    let mut r = c;
    while r + 1 < n && db[r] > level {
        r += 1;
    }
    if db[l] > level || db[r] > level {
        return Err(SgaError::Metric("-3 dB points not found".into()));
    }
    let left = crossing(db, l + 1, l, level);
    let right = crossing(db, r - 1, r, level);
    let irw = (right - left) * profile.axis.step.abs();

    let mut ln = c;
    while ln > 0 && db[ln - 1] < db[ln] {
        ln -= 1;
    }
    let mut rn = c;
    while rn + 1 < n && db[rn + 1] < db[rn] {
        rn += 1;
    }
    let mut reliable = ln > 0 && rn + 1 < n;
    let half_main = 0.5 * (rn - ln) as f64;
    let reach = (SIDELOBE_CELLS * half_main).round() as usize;
    let lo = if ln >= reach {
        ln - reach
    } else {
        reliable = false;
        0
    };
    let hi = if rn + reach < n {
        rn + reach
    } else {
        reliable = false;
        n - 1
    };
    let lin = |k: usize| 10f64.powf(db[k] / 10.0);
    let main: f64 = (ln..=rn).map(lin).sum();
    let side: f64 = (lo..ln).chain(rn + 1..=hi).map(lin).sum();
    let pslr = (lo..ln)
        .chain(rn + 1..=hi)
        .map(|k| db[k])
        .fold(f64::NEG_INFINITY, f64::max)
        - db[c];
    if !pslr.is_finite() {
        reliable = false;
    }
    Ok(ProfileMetrics {
        irw,
        pslr,
        islr: 10.0 * (side / main).log10(),
        peak_position,
        reliable,
    })
}

/// Two-axis metrics of one target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusMetrics {
    pub range: ProfileMetrics,
    pub azimuth: ProfileMetrics,
    /// Measured `(x, y)` of the peak.
    pub peak_xy: (f64, f64),
    pub peak_phase: f64,
    pub peak_magnitude: f64,
    pub peak_pixel: (usize, usize),
}

/// Finds the strongest pixel within `search` pixels of `(x, y)` and measures both cuts through it.
///
/// Each cut is measured on a window of [`CUT_HALF_WIDTH`] pixels either side of the peak. A
/// response too wide for that window is measured on the whole cut and flagged unreliable.
pub fn measure_target(img: &ComplexImage, x: f64, y: f64, search: usize, oversample: usize) -> Result<FocusMetrics> {
    measure_target_window(img, x, y, search, oversample, Some(CUT_HALF_WIDTH))
}

/// [`measure_target`] with an explicit cut window; `None` measures whole cuts.
pub fn measure_target_window(
    img: &ComplexImage,
    x: f64,
    y: f64,
    search: usize,
    oversample: usize,
    half_width_px: Option<usize>,
) -> Result<FocusMetrics> {
    let (rows, cols) = img.data.dim();
    let ci = img.x_axis.position(x).round();
    let cj = img.y_axis.position(y).round();
    if ci < 0.0 || cj < 0.0 || ci >= rows as f64 || cj >= cols as f64 {
        return Err(SgaError::Metric(format!("target ({x}, {y}) is outside the image")));
    }
    let (ci, cj) = (ci as usize, cj as usize);
    let i0 = ci.saturating_sub(search);
    let i1 = (ci + search).min(rows - 1);
    let j0 = cj.saturating_sub(search);
    let j1 = (cj + search).min(cols - 1);
    let mut best = (ci, cj);
    let mut mag = -1.0;
    for i in i0..=i1 {
        for j in j0..=j1 {
            let m = img.data[[i, j]].norm_sqr();
            if m > mag {
                mag = m;
                best = (i, j);
            }
        }
    }
    let cut = |axis: CutAxis| -> Result<ProfileMetrics> {
        let full = extract_profile(img, axis, best, oversample)?;
        let Some(hw) = half_width_px else {
            return measure(&full);
        };
        let (centre, step) = match axis {
            CutAxis::Range => (img.y_axis.value(best.1), img.y_axis.step.abs()),
            CutAxis::Azimuth => (img.x_axis.value(best.0), img.x_axis.step.abs()),
        };
        match measure(&full.window(centre, hw as f64 * step)) {
            Ok(m) => Ok(m),
            Err(SgaError::Metric(_)) => measure(&full).map(|m| ProfileMetrics { reliable: false, ..m }),
            Err(e) => Err(e),
        }
    };
    let range = cut(CutAxis::Range)?;
    let azimuth = cut(CutAxis::Azimuth)?;
    let v = img.data[[best.0, best.1]];
    Ok(FocusMetrics {
        range,
        azimuth,
        peak_xy: (azimuth.peak_position, range.peak_position),
        peak_phase: v.arg(),
        peak_magnitude: v.norm(),
        peak_pixel: best,
    })
}
