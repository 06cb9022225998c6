//! Time-domain backprojection onto points of the spherical surface.
//!
//! Each pixel sums, in pulse order, the range-compressed sample at its exact
//! round-trip delay times the carrier phase of that range. It makes no
//! geometric approximation and serves as the reference for the Fourier chain.

use std::f64::consts::PI;

use log::warn;
use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::axis::LinearAxis;
use crate::error::{Result, SgaError};
use crate::geometry::{EarthModel, GroundPoint, Trajectory, SPEED_OF_LIGHT};
use crate::image_formation::ComplexImage;
use crate::interp::SincInterpolator;
use crate::preprocess::CompressedData;

/// Pixel grid in projection coordinates; every node is lifted onto the sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageGrid {
    pub x_axis: LinearAxis,
    pub y_axis: LinearAxis,
}

impl ImageGrid {
    pub fn of(img: &ComplexImage) -> Self {
        ImageGrid {
            x_axis: img.x_axis,
            y_axis: img.y_axis,
        }
    }
}

struct Context<'a> {
    comp: &'a CompressedData,
    positions: Vec<[f64; 3]>,
    kern: &'static SincInterpolator,
    carrier: f64,
    delay_scale: f64,
}

impl<'a> Context<'a> {
    fn new(comp: &'a CompressedData, traj: &Trajectory) -> Result<Self> {
        if traj.len() != comp.data.nrows() {
            return Err(SgaError::Geometry("trajectory and data lengths differ".into()));
        }
        Ok(Context {
            comp,
            positions: traj.states.iter().map(|s| [s.position.x, s.position.y, s.position.z]).collect(),
            kern: SincInterpolator::shared(),
            carrier: 4.0 * PI * comp.radar.fc / SPEED_OF_LIGHT,
            delay_scale: 2.0 / SPEED_OF_LIGHT * comp.radar.fs,
        })
    }

    /// Returns the pixel value and the number of pulses whose delay fell outside the gate.
    fn pixel(&self, p: &GroundPoint) -> (Complex64, usize) {
        let n_fast = self.comp.gate.samples as f64;
        let offset = self.comp.gate.start * self.comp.radar.fs;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut missed = 0;
        for (row, s) in self.comp.data.axis_iter(Axis(0)).zip(self.positions.iter()) {
            let dx = s[0] - p.x;
            let dy = s[1] - p.y;
            let dz = s[2] - p.z;
            let r = (dx * dx + dy * dy + dz * dz).sqrt();
            let pos = r * self.delay_scale - offset;
            if pos < 0.0 || pos > n_fast - 1.0 {
                missed += 1;
                continue;
            }
            let v = self.kern.sample(row.as_slice().expect("contiguous row"), pos);
            acc += v * Complex64::from_polar(1.0, self.carrier * r);
        }
        (acc, missed)
    }
}

/// Backprojects onto arbitrary surface points.
pub fn backproject_points(comp: &CompressedData, traj: &Trajectory, points: &[GroundPoint]) -> Result<Vec<Complex64>> {
    let ctx = Context::new(comp, traj)?;
    let (vals, missed): (Vec<Complex64>, Vec<usize>) = points.par_iter().map(|p| ctx.pixel(p)).unzip();
    let missed: usize = missed.iter().sum();
    if missed > 0 {
        warn!("{missed} pixel-pulse delays fell outside the gate and were skipped");
    }
    Ok(vals)
}

/// Backprojects onto a regular `(x, y)` grid lifted to the sphere.
pub fn backproject(comp: &CompressedData, traj: &Trajectory, grid: &ImageGrid, earth: &EarthModel) -> Result<ComplexImage> {
    let ctx = Context::new(comp, traj)?;
    let (nx, ny) = (grid.x_axis.len, grid.y_axis.len);
    let mut data = Array2::<Complex64>::zeros((nx, ny));
    let missed: Result<Vec<usize>> = data
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(i, mut row)| {
            let x = grid.x_axis.value(i);
            let mut missed = 0;
            for (j, v) in row.iter_mut().enumerate() {
                let p = GroundPoint::on_sphere(x, grid.y_axis.value(j), earth.radius)?;
                let (val, m) = ctx.pixel(&p);
                *v = val;
                missed += m;
            }
            Ok(missed)
        })
        .collect();
    let missed: usize = missed?.iter().sum();
    if missed > 0 {
        warn!("{missed} pixel-pulse delays fell outside the gate and were skipped");
    }
    Ok(ComplexImage {
        data,
        x_axis: grid.x_axis,
        y_axis: grid.y_axis,
        delta_kx: 0.0,
        delta_ky: 0.0,
    })
}
