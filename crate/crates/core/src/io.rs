//! Binary containers, PNG previews and the metrics table.
//!
//! Every container starts with a 64-byte little-endian header:
//!
//! | offset | type      | field                          |
//! |-------:|-----------|--------------------------------|
//! | 0      | `[u8; 4]` | magic                          |
//! | 4      | `u32`     | format version                 |
//! | 8      | `u32`     | rows                           |
//! | 12     | `u32`     | columns                        |
//! | 16     | `f64` x 6 | fs, prf, fc, Br, gate start, Tp |
//!
//! Samples follow row-major as interleaved `f32` real/imaginary pairs. Phase
//! histories (`SGAP`), wavenumber grids (`SGAW`) and images (`SGAI`) append or
//! prepend their axis descriptors as `f64` blocks, described on each writer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::axis::LinearAxis;
use crate::echo_sim::{FastTimeGate, RadarParams, RawData};
use crate::error::{Result, SgaError};
use crate::geometry::EarthModel;
use crate::image_formation::ComplexImage;
use crate::metrics::FocusMetrics;
use crate::mocomp::SceneReference;
use crate::polar_format::{AzimuthMapSample, ResampleMode, WavenumberData};
use crate::preprocess::{CompressedData, PhaseHistory, PhaseHistoryStage, PulseInfo};

pub const FORMAT_VERSION: u32 = 1;
pub const MAGIC_RAW: &[u8; 4] = b"SGAC";
pub const MAGIC_PHASE: &[u8; 4] = b"SGAP";
pub const MAGIC_WAVENUMBER: &[u8; 4] = b"SGAW";
pub const MAGIC_IMAGE: &[u8; 4] = b"SGAI";
const HEADER_LEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Header {
    magic: [u8; 4],
    rows: usize,
    cols: usize,
    radar: RadarParams,
    prf: f64,
    gate_start: f64,
}

fn write_header<W: Write>(w: &mut W, h: &Header) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN);
    buf.extend_from_slice(&h.magic);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(h.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(h.cols as u32).to_le_bytes());
    for v in [h.radar.fs, h.prf, h.radar.fc, h.radar.bandwidth, h.gate_start, h.radar.pulse_duration] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    debug_assert_eq!(buf.len(), HEADER_LEN);
    w.write_all(&buf)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, expect: &[u8; 4]) -> Result<Header> {
    let mut buf = [0u8; HEADER_LEN];
    r.read_exact(&mut buf)?;
    let magic: [u8; 4] = buf[0..4].try_into().unwrap();
    if &magic != expect {
        return Err(SgaError::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(expect),
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(SgaError::Format(format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    let f = |k: usize| f64::from_le_bytes(buf[16 + 8 * k..24 + 8 * k].try_into().unwrap());
    Ok(Header {
        magic,
        rows,
        cols,
        radar: RadarParams {
            fs: f(0),
            fc: f(2),
            bandwidth: f(3),
            pulse_duration: f(5),
        },
        prf: f(1),
        gate_start: f(4),
    })
}

fn write_samples<W: Write>(w: &mut W, data: &Array2<Complex64>) -> Result<()> {
    let mut buf = Vec::with_capacity(data.ncols() * 8);
    for row in data.rows() {
        buf.clear();
        for v in row.iter() {
            buf.extend_from_slice(&(v.re as f32).to_le_bytes());
            buf.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_samples<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Array2<Complex64>> {
    let mut out = Array2::<Complex64>::zeros((rows, cols));
    let mut buf = vec![0u8; cols * 8];
    for mut row in out.rows_mut() {
        r.read_exact(&mut buf)?;
        for (k, v) in row.iter_mut().enumerate() {
            let re = f32::from_le_bytes(buf[8 * k..8 * k + 4].try_into().unwrap());
            let im = f32::from_le_bytes(buf[8 * k + 4..8 * k + 8].try_into().unwrap());
            *v = Complex64::new(re as f64, im as f64);
        }
    }
    Ok(out)
}

fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(vals.len() * 8);
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn mode_code(m: ResampleMode) -> f64 {
    match m {
        ResampleMode::LowRes => 1.0,
        ResampleMode::HighRes => 2.0,
    }
}

fn mode_from_code(c: f64) -> Result<ResampleMode> {
    match c as i64 {
        1 => Ok(ResampleMode::LowRes),
        2 => Ok(ResampleMode::HighRes),
        other => Err(SgaError::Format(format!("unknown resampling mode code {other}"))),
    }
}

fn no_radar() -> RadarParams {
    RadarParams {
        fc: 0.0,
        bandwidth: 0.0,
        pulse_duration: 0.0,
        fs: 0.0,
    }
}

/// Writes raw echoes (`SGAC`).
pub fn write_raw(path: &Path, raw: &RawData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(
        &mut w,
        &Header {
            magic: *MAGIC_RAW,
            rows: raw.data.nrows(),
            cols: raw.data.ncols(),
            radar: raw.radar,
            prf: raw.prf,
            gate_start: raw.gate.start,
        },
    )?;
    write_samples(&mut w, &raw.data)?;
    w.flush()?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<RawData> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r, MAGIC_RAW)?;
    let data = read_samples(&mut r, h.rows, h.cols)?;
    Ok(RawData {
        data,
        gate: FastTimeGate {
            start: h.gate_start,
            samples: h.cols,
        },
        radar: h.radar,
        prf: h.prf,
        truncated_echoes: 0,
    })
}

/// Writes pulse-compressed echoes in the raw container layout.
pub fn write_compressed(path: &Path, comp: &CompressedData) -> Result<()> {
    let raw = RawData {
        data: comp.data.clone(),
        gate: comp.gate,
        radar: comp.radar,
        prf: comp.prf,
        truncated_echoes: 0,
    };
    write_raw(path, &raw)
}

/// Writes a phase history (`SGAP`).
///
/// After the samples: one `(t, theta, phi, a, fc_bar, Br_bar)` record per pulse,
/// then `(f0, df, x_c, y_c, z_c, R0, earth rotation, stage, fc_bar_ref, band lo, band hi, first-order flag)`.
/// The stage code is 0 before reformatting and the mode code after it.
pub fn write_phase_history(path: &Path, ph: &PhaseHistory) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(
        &mut w,
        &Header {
            magic: *MAGIC_PHASE,
            rows: ph.data.nrows(),
            cols: ph.data.ncols(),
            radar: ph.radar,
            prf: ph.prf,
            gate_start: 0.0,
        },
    )?;
    write_samples(&mut w, &ph.data)?;
    let table: Vec<f64> = ph.pulses.iter().flat_map(|p| [p.t, p.theta, p.phi, p.a, p.fc_bar, p.br_bar]).collect();
    write_f64s(&mut w, &table)?;
    let (stage, fc_ref, lo, hi) = match ph.stage {
        PhaseHistoryStage::Preprocessed => (0.0, 0.0, 0.0, 0.0),
        PhaseHistoryStage::RangeResampled { mode, fc_bar_ref, band } => (mode_code(mode), fc_bar_ref, band.0, band.1),
    };
    write_f64s(
        &mut w,
        &[
            ph.freq.start,
            ph.freq.step,
            ph.scene.x_c,
            ph.scene.y_c,
            ph.scene.z_c,
            ph.earth.radius,
            ph.earth.rotation_rate,
            stage,
            fc_ref,
            lo,
            hi,
            if ph.first_order_applied { 1.0 } else { 0.0 },
        ],
    )?;
    w.flush()?;
    Ok(())
}

pub fn read_phase_history(path: &Path) -> Result<PhaseHistory> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r, MAGIC_PHASE)?;
    let data = read_samples(&mut r, h.rows, h.cols)?;
    let table = read_f64s(&mut r, 6 * h.rows)?;
    let pulses = table
        .chunks_exact(6)
        .map(|c| PulseInfo {
            t: c[0],
            theta: c[1],
            phi: c[2],
            a: c[3],
            fc_bar: c[4],
            br_bar: c[5],
        })
        .collect();
    let t = read_f64s(&mut r, 12)?;
    let stage = if t[7] == 0.0 {
        PhaseHistoryStage::Preprocessed
    } else {
        PhaseHistoryStage::RangeResampled {
            mode: mode_from_code(t[7])?,
            fc_bar_ref: t[8],
            band: (t[9], t[10]),
        }
    };
    Ok(PhaseHistory {
        data,
        freq: LinearAxis::new(t[0], t[1], h.cols),
        pulses,
        radar: h.radar,
        scene: SceneReference {
            x_c: t[2],
            y_c: t[3],
            z_c: t[4],
        },
        earth: EarthModel {
            radius: t[5],
            rotation_rate: t[6],
        },
        prf: h.prf,
        stage,
        first_order_applied: t[11] != 0.0,
    })
}

/// Writes a wavenumber grid (`SGAW`).
///
/// After the header: `(kx0, dkx, ky0, dky, Delta kx, Delta ky, Omega, fc_bar_ref, mode,
/// x_c, y_c, z_c, R0, earth rotation, first-order flag)`, the samples, then one
/// `(t~, t, theta, phi)` record per `kx` row.
pub fn write_wavenumber(path: &Path, wd: &WavenumberData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(
        &mut w,
        &Header {
            magic: *MAGIC_WAVENUMBER,
            rows: wd.data.nrows(),
            cols: wd.data.ncols(),
            radar: wd.radar,
            prf: 0.0,
            gate_start: 0.0,
        },
    )?;
    write_f64s(
        &mut w,
        &[
            wd.kx.start,
            wd.kx.step,
            wd.ky.start,
            wd.ky.step,
            wd.delta_kx,
            wd.delta_ky,
            wd.omega,
            wd.fc_bar_ref,
            mode_code(wd.mode),
            wd.scene.x_c,
            wd.scene.y_c,
            wd.scene.z_c,
            wd.earth.radius,
            wd.earth.rotation_rate,
            if wd.first_order_applied { 1.0 } else { 0.0 },
        ],
    )?;
    write_samples(&mut w, &wd.data)?;
    let map: Vec<f64> = wd.azimuth_map.iter().flat_map(|m| [m.t_tilde, m.t, m.theta, m.phi]).collect();
    write_f64s(&mut w, &map)?;
    w.flush()?;
    Ok(())
}

pub fn read_wavenumber(path: &Path) -> Result<WavenumberData> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r, MAGIC_WAVENUMBER)?;
    let a = read_f64s(&mut r, 15)?;
    let data = read_samples(&mut r, h.rows, h.cols)?;
    let map = read_f64s(&mut r, 4 * h.rows)?;
    Ok(WavenumberData {
        data,
        kx: LinearAxis::new(a[0], a[1], h.rows),
        ky: LinearAxis::new(a[2], a[3], h.cols),
        delta_kx: a[4],
        delta_ky: a[5],
        omega: a[6],
        fc_bar_ref: a[7],
        mode: mode_from_code(a[8])?,
        scene: SceneReference {
            x_c: a[9],
            y_c: a[10],
            z_c: a[11],
        },
        earth: EarthModel {
            radius: a[12],
            rotation_rate: a[13],
        },
        radar: h.radar,
        first_order_applied: a[14] != 0.0,
        azimuth_map: map
            .chunks_exact(4)
            .map(|c| AzimuthMapSample {
                t_tilde: c[0],
                t: c[1],
                theta: c[2],
                phi: c[3],
            })
            .collect(),
    })
}

/// Writes a complex image (`SGAI`). After the header: `(x0, dx, y0, dy, Delta kx, Delta ky)`, then the samples.
pub fn write_image(path: &Path, img: &ComplexImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(
        &mut w,
        &Header {
            magic: *MAGIC_IMAGE,
            rows: img.data.nrows(),
            cols: img.data.ncols(),
            radar: no_radar(),
            prf: 0.0,
            gate_start: 0.0,
        },
    )?;
    write_f64s(
        &mut w,
        &[img.x_axis.start, img.x_axis.step, img.y_axis.start, img.y_axis.step, img.delta_kx, img.delta_ky],
    )?;
    write_samples(&mut w, &img.data)?;
    w.flush()?;
    Ok(())
}

pub fn read_image(path: &Path) -> Result<ComplexImage> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r, MAGIC_IMAGE)?;
    let a = read_f64s(&mut r, 6)?;
    let data = read_samples(&mut r, h.rows, h.cols)?;
    Ok(ComplexImage {
        data,
        x_axis: LinearAxis::new(a[0], a[1], h.rows),
        y_axis: LinearAxis::new(a[2], a[3], h.cols),
        delta_kx: a[4],
        delta_ky: a[5],
    })
}

/// Default dynamic range of PNG previews [dB].
pub const PNG_DYNAMIC_RANGE_DB: f64 = 40.0;

/// 8-bit grayscale magnitude in dB; image rows become PNG rows.
pub fn write_png(path: &Path, img: &ComplexImage, dynamic_range_db: f64) -> Result<()> {
    let (rows, cols) = img.data.dim();
    let peak = img.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut pixels = Vec::with_capacity(rows * cols);
    for v in img.data.iter() {
        let db = if peak > 0.0 { 20.0 * (v.norm() / peak).max(1e-30).log10() } else { -dynamic_range_db };
        let level = ((db + dynamic_range_db) / dynamic_range_db).clamp(0.0, 1.0);
        pixels.push((level * 255.0).round() as u8);
    }
    let buf = image::GrayImage::from_raw(cols as u32, rows as u32, pixels)
        .ok_or_else(|| SgaError::Format("image buffer size mismatch".into()))?;
    buf.save(path)?;
    Ok(())
}

/// One row of the metrics table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetReport {
    pub true_x: f64,
    pub true_y: f64,
    pub metrics: FocusMetrics,
}

pub const METRICS_HEADER: &str = "true_x,true_y,peak_x,peak_y,irw_rg,irw_az,pslr_rg,pslr_az,islr_rg,islr_az";

pub fn metrics_csv(rows: &[TargetReport]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let m = &r.metrics;
        s.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{:.4}\n",
            r.true_x,
            r.true_y,
            m.peak_xy.0,
            m.peak_xy.1,
            m.range.irw,
            m.azimuth.irw,
            m.range.pslr,
            m.azimuth.pslr,
            m.range.islr,
            m.azimuth.islr
        ));
    }
    s
}

pub fn write_metrics_csv(path: &Path, rows: &[TargetReport]) -> Result<()> {
    std::fs::write(path, metrics_csv(rows))?;
    Ok(())
}
