//! Orbit, imaging frame and spherical Earth geometry.
//!
//! The imaging frame is Earth-centred. `Y` points through the aperture-centre
//! radar position and `X` lies along the direction of motion, so a radar
//! state is described by `(R, theta, phi)` with
//! `position = (R cos(phi) sin(theta), R cos(phi) cos(theta), R sin(phi))`.
//! Ground points live on the sphere of radius `R0` and are labelled by their
//! `(x, y)` projection coordinates.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgaError};
use crate::interp::MonotoneCubic;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const EARTH_RADIUS: f64 = 6.371e6;
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_9e-5;
pub const EARTH_GM: f64 = 3.986_004_418e14;

/// Spherical Earth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarthModel {
    pub radius: f64,
    pub rotation_rate: f64,
}

impl Default for EarthModel {
    fn default() -> Self {
        EarthModel {
            radius: EARTH_RADIUS,
            rotation_rate: EARTH_ROTATION_RATE,
        }
    }
}

/// One radar position expressed in the imaging frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadarState {
    pub t: f64,
    pub position: Vector3<f64>,
    pub radius: f64,
    pub theta: f64,
    pub phi: f64,
}

impl RadarState {
    pub fn from_position(t: f64, position: Vector3<f64>) -> Self {
        let radius = position.norm();
        let theta = position.x.atan2(position.y);
        let phi = (position.z / radius).clamp(-1.0, 1.0).asin();
        RadarState {
            t,
            position,
            radius,
            theta,
            phi,
        }
    }

    /// Builds a state from spherical coordinates, so that the angles are exact.
    pub fn from_spherical(t: f64, radius: f64, theta: f64, phi: f64) -> Self {
        let position = Vector3::new(
            radius * phi.cos() * theta.sin(),
            radius * phi.cos() * theta.cos(),
            radius * phi.sin(),
        );
        RadarState {
            t,
            position,
            radius,
            theta,
            phi,
        }
    }

    /// Projection of a ground point onto the line-of-sight unit vector of this state.
    pub fn projection(&self, x: f64, y: f64, z: f64) -> f64 {
        let cp = self.phi.cos();
        x * cp * self.theta.sin() + y * cp * self.theta.cos() + z * self.phi.sin()
    }
}

/// Ordered radar states in the imaging frame. Time is zero at `center_index`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<RadarState>,
    pub center_index: usize,
}

impl Trajectory {
    pub fn new(states: Vec<RadarState>, center_index: usize) -> Result<Self> {
        if states.len() < 3 {
            return Err(SgaError::Geometry("trajectory needs at least three samples".into()));
        }
        if center_index >= states.len() {
            return Err(SgaError::Geometry("center index out of range".into()));
        }
        for w in states.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(SgaError::Geometry("trajectory times must increase".into()));
            }
        }
        Ok(Trajectory {
            states,
            center_index,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn center(&self) -> &RadarState {
        &self.states[self.center_index]
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    /// Mean sample interval.
    pub fn sample_interval(&self) -> f64 {
        let n = self.states.len();
        (self.states[n - 1].t - self.states[0].t) / (n - 1) as f64
    }

    /// Angular rate `d theta / dt` at the aperture centre (central difference).
    pub fn angular_rate(&self) -> f64 {
        let c = self.center_index;
        let (a, b) = if c == 0 {
            (0, 1)
        } else if c + 1 >= self.states.len() {
            (c - 1, c)
        } else {
            (c - 1, c + 1)
        };
        (self.states[b].theta - self.states[a].theta) / (self.states[b].t - self.states[a].t)
    }

    pub fn theta_curve(&self) -> MonotoneCubic {
        MonotoneCubic::new(self.times(), self.states.iter().map(|s| s.theta).collect())
    }

    pub fn phi_curve(&self) -> MonotoneCubic {
        MonotoneCubic::new(self.times(), self.states.iter().map(|s| s.phi).collect())
    }

    pub fn max_abs_phi(&self) -> f64 {
        self.states.iter().map(|s| s.phi.abs()).fold(0.0, f64::max)
    }
}

/// A point of the imaging scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub on_surface: bool,
}

impl GroundPoint {
    /// Places the point `(x, y)` on the sphere, on the positive-`z` hemisphere.
    pub fn on_sphere(x: f64, y: f64, earth_radius: f64) -> Result<Self> {
        let z = surface_height(x, y, earth_radius)
            .ok_or_else(|| SgaError::Geometry(format!("({x}, {y}) lies outside the Earth disc")))?;
        Ok(GroundPoint {
            x,
            y,
            z,
            on_surface: true,
        })
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

/// Height `z = sqrt(R0^2 - x^2 - y^2)` of the sphere above the `XY` plane.
pub fn surface_height(x: f64, y: f64, earth_radius: f64) -> Option<f64> {
    let arg = earth_radius * earth_radius - x * x - y * y;
    if arg < 0.0 {
        None
    } else {
        Some(arg.sqrt())
    }
}

pub fn slant_range(radar: &RadarState, p: &GroundPoint) -> f64 {
    (radar.position - p.vector()).norm()
}

/// Projection `u` of any surface point at slant range `r` from a radar at radius `radar_radius`.
pub fn u_from_r(r: f64, radar_radius: f64, earth_radius: f64) -> f64 {
    (radar_radius * radar_radius + earth_radius * earth_radius - r * r) / (2.0 * radar_radius)
}

/// Inverse of [`u_from_r`].
pub fn r_from_u(u: f64, radar_radius: f64, earth_radius: f64) -> Result<f64> {
    let arg = radar_radius * radar_radius + earth_radius * earth_radius - 2.0 * radar_radius * u;
    if arg < 0.0 {
        return Err(SgaError::Geometry(format!("u = {u} is beyond the reachable range")));
    }
    Ok(arg.sqrt())
}

/// Choice of imaging-frame axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrameOption {
    /// `Y` through the centre position, `X` in the plane of `Y` and the centre velocity.
    #[default]
    Velocity,
    /// `Z` normal to the least-squares plane of the trajectory through the Earth centre.
    OrbitPlane,
}

/// Earth-fixed sample of the radar position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcefSample {
    pub t: f64,
    pub position: Vector3<f64>,
}

/// Rotates an Earth-fixed trajectory into the imaging frame and re-references time to the centre sample.
pub fn build_imaging_frame(ecef: &[EcefSample], center_index: usize, option: FrameOption) -> Result<Trajectory> {
    let n = ecef.len();
    if n < 3 {
        return Err(SgaError::FrameConstruction("need at least three samples".into()));
    }
    if center_index >= n {
        return Err(SgaError::FrameConstruction("center index out of range".into()));
    }
    let c = center_index;
    let (a, b) = if c == 0 {
        (0, 1)
    } else if c + 1 >= n {
        (c - 1, c)
    } else {
        (c - 1, c + 1)
    };
    let vel = (ecef[b].position - ecef[a].position) / (ecef[b].t - ecef[a].t);
    let pc = ecef[c].position;
    if pc.norm() == 0.0 {
        return Err(SgaError::FrameConstruction("centre position at the Earth centre".into()));
    }

    let (ex, ey, ez) = match option {
        FrameOption::Velocity => {
            let ey = pc / pc.norm();
            let along = vel - ey * vel.dot(&ey);
            if along.norm() <= 1e-12 * vel.norm().max(1e-300) {
                return Err(SgaError::FrameConstruction("velocity is parallel to the position vector".into()));
            }
            let ex = along / along.norm();
            (ex, ey, ex.cross(&ey))
        }
        FrameOption::OrbitPlane => {
            let mut scatter = Matrix3::zeros();
            for s in ecef {
                let p = s.position / pc.norm();
                scatter += p * p.transpose();
            }
            let eig = SymmetricEigen::new(scatter);
            let mut k = 0;
            for j in 1..3 {
                if eig.eigenvalues[j] < eig.eigenvalues[k] {
                    k = j;
                }
            }
            let mut normal: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
            normal /= normal.norm();
            let yv = pc - normal * pc.dot(&normal);
            if yv.norm() <= 1e-12 * pc.norm() {
                return Err(SgaError::FrameConstruction("centre position is normal to the orbit plane".into()));
            }
            let ey = yv / yv.norm();
            let mut ex = ey.cross(&normal);
            if ex.dot(&vel) < 0.0 {
                normal = -normal;
                ex = -ex;
            }
            if vel.norm() == 0.0 {
                return Err(SgaError::FrameConstruction("zero velocity at the aperture centre".into()));
            }
            (ex, ey, normal)
        }
    };

    let rot = Matrix3::from_rows(&[ex.transpose(), ey.transpose(), ez.transpose()]);
    let t0 = ecef[c].t;
    let states = ecef
        .iter()
        .map(|s| RadarState::from_position(s.t - t0, rot * s.position))
        .collect();
    Trajectory::new(states, c)
}

/// Circular orbit description.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSpec {
    pub altitude: f64,
    pub duration: f64,
    pub prf: f64,
    #[serde(default = "default_inclination")]
    pub inclination_deg: f64,
    #[serde(default)]
    pub argument_of_latitude_deg: f64,
    #[serde(default)]
    pub earth_rotation: bool,
    #[serde(default = "default_gm")]
    pub gravitational_parameter: f64,
}

fn default_inclination() -> f64 {
    97.4
}

fn default_gm() -> f64 {
    EARTH_GM
}

impl OrbitSpec {
    pub fn pulse_count(&self) -> usize {
        (self.duration * self.prf).round() as usize
    }
}

/// Samples a circular Keplerian orbit at `1/prf`, centred on `t = 0` (centre index `n/2`).
pub fn generate_orbit(orbit: &OrbitSpec, earth: &EarthModel) -> Result<(Vec<EcefSample>, usize)> {
    if !(orbit.altitude > 0.0) {
        return Err(SgaError::validation("orbit.altitude", "must be positive"));
    }
    if !(orbit.prf > 0.0) {
        return Err(SgaError::validation("orbit.prf", "must be positive"));
    }
    if !(orbit.duration > 0.0) {
        return Err(SgaError::validation("orbit.duration", "must be positive"));
    }
    let n = orbit.pulse_count();
    if n < 3 {
        return Err(SgaError::validation("orbit.duration", "aperture holds fewer than three pulses"));
    }
    let a = earth.radius + orbit.altitude;
    let mean_motion = (orbit.gravitational_parameter / (a * a * a)).sqrt();
    let inc = orbit.inclination_deg.to_radians();
    let u0 = orbit.argument_of_latitude_deg.to_radians();
    let center = n / 2;
    let samples = (0..n)
        .map(|i| {
            let t = (i as f64 - center as f64) / orbit.prf;
            let nu = u0 + mean_motion * t;
            let eci = Vector3::new(a * nu.cos(), a * nu.sin() * inc.cos(), a * nu.sin() * inc.sin());
            let position = if orbit.earth_rotation {
                let g = -earth.rotation_rate * t;
                let (s, c) = g.sin_cos();
                Vector3::new(c * eci.x - s * eci.y, s * eci.x + c * eci.y, eci.z)
            } else {
                eci
            };
            EcefSample { t, position }
        })
        .collect();
    Ok((samples, center))
}

/// Reads a `t x y z` text trajectory; lines starting with `#` are comments.
pub fn read_trajectory_file(path: &Path) -> Result<Vec<EcefSample>> {
    let text = std::fs::read_to_string(path)?;
    parse_trajectory_text(&text)
}

pub fn parse_trajectory_text(text: &str) -> Result<Vec<EcefSample>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| SgaError::Format(format!("trajectory line {}: {e}", lineno + 1)))?;
        if vals.len() != 4 {
            return Err(SgaError::Format(format!(
                "trajectory line {}: expected 4 columns, found {}",
                lineno + 1,
                vals.len()
            )));
        }
        out.push(EcefSample {
            t: vals[0],
            position: Vector3::new(vals[1], vals[2], vals[3]),
        });
    }
    Ok(out)
}

pub fn write_trajectory_file(path: &Path, samples: &[EcefSample]) -> Result<()> {
    let mut s = String::from("# t x y z (s, m, m, m)\n");
    for p in samples {
        writeln!(s, "{:.17e} {:.17e} {:.17e} {:.17e}", p.t, p.position.x, p.position.y, p.position.z).unwrap();
    }
    std::fs::write(path, s)?;
    Ok(())
}
