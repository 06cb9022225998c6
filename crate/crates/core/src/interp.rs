//! Shared interpolation kernels.
//!
//! [`SincInterpolator`] is the Kaiser-windowed sinc used for every band-limited
//! resampling step (fast time to `u`, both polar reformatting passes and the
//! backprojection range lookup). [`MonotoneCubic`] is a shape-preserving cubic
//! used for smooth geometric quantities such as `theta(t)` and `phi(t)`.

use std::sync::OnceLock;

use num_complex::Complex64;

/// Number of taps of the windowed sinc kernel.
pub const TAPS: usize = 32;
/// Kaiser shape parameter.
pub const KAISER_BETA: f64 = 8.0;
/// Half width of the kernel in samples.
pub const HALF_WIDTH: usize = TAPS / 2;

const PHASES: usize = 1024;

/// Modified Bessel function of the first kind, order zero (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Normalised sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn kernel_value(d: f64) -> f64 {
    let half = HALF_WIDTH as f64;
    let r = d / half;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / bessel_i0(KAISER_BETA);
    sinc(d) * window
}

/// Kaiser-windowed sinc interpolator with a tabulated kernel.
///
/// For a fractional position `p = i0 + mu` the taps are the samples
/// `i0 - 15 ..= i0 + 16`. Samples outside the input are treated as zero.
pub struct SincInterpolator {
    table: Vec<[f64; TAPS]>,
}

impl SincInterpolator {
    fn build() -> Self {
        let mut table = Vec::with_capacity(PHASES + 1);
        for m in 0..=PHASES {
            let mu = m as f64 / PHASES as f64;
            let mut row = [0.0; TAPS];
            for (j, w) in row.iter_mut().enumerate() {
                let d = j as f64 - (HALF_WIDTH as f64 - 1.0) - mu;
                *w = kernel_value(d);
            }
            if m == 0 {
                row = [0.0; TAPS];
                row[HALF_WIDTH - 1] = 1.0;
            } else if m == PHASES {
                row = [0.0; TAPS];
                row[HALF_WIDTH] = 1.0;
            }
            table.push(row);
        }
        SincInterpolator { table }
    }

    /// Process-wide instance.
    pub fn shared() -> &'static SincInterpolator {
        static INSTANCE: OnceLock<SincInterpolator> = OnceLock::new();
        INSTANCE.get_or_init(SincInterpolator::build)
    }

    /// Kernel weights for fractional offset `mu` in `[0, 1)`.
    #[inline]
    pub fn weights(&self, mu: f64) -> [f64; TAPS] {
        let s = mu * PHASES as f64;
        let m = (s.floor() as usize).min(PHASES - 1);
        let frac = s - m as f64;
        if frac == 0.0 {
            return self.table[m];
        }
        let a = &self.table[m];
        let b = &self.table[m + 1];
        let mut w = [0.0; TAPS];
        for j in 0..TAPS {
            w[j] = a[j] + frac * (b[j] - a[j]);
        }
        w
    }

    /// Interpolates `data` at fractional sample position `pos`.
    #[inline]
    pub fn sample(&self, data: &[Complex64], pos: f64) -> Complex64 {
        let n = data.len() as isize;
        let fl = pos.floor();
        let i0 = fl as isize;
        let mu = pos - fl;
        if mu == 0.0 {
            return if i0 >= 0 && i0 < n {
                data[i0 as usize]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        let first = i0 - (HALF_WIDTH as isize - 1);
        if first + TAPS as isize <= 0 || first >= n {
            return Complex64::new(0.0, 0.0);
        }
        let w = self.weights(mu);
        let mut re = 0.0;
        let mut im = 0.0;
        if first >= 0 && first + (TAPS as isize) <= n {
            let seg = &data[first as usize..first as usize + TAPS];
            for (x, wj) in seg.iter().zip(w.iter()) {
                re += x.re * wj;
                im += x.im * wj;
            }
        } else {
            for (j, wj) in w.iter().enumerate() {
                let k = first + j as isize;
                if k >= 0 && k < n {
                    let x = data[k as usize];
                    re += x.re * wj;
                    im += x.im * wj;
                }
            }
        }
        Complex64::new(re, im)
    }

    /// True when the kernel footprint at `pos` lies entirely inside `len` samples.
    pub fn fully_supported(len: usize, pos: f64) -> bool {
        let i0 = pos.floor();
        i0 - (HALF_WIDTH as f64 - 1.0) >= 0.0 && i0 + HALF_WIDTH as f64 <= len as f64 - 1.0
    }
}

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    /// Builds the interpolant. `x` must be strictly increasing and have at least two points.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(x.len() >= 2, "need at least two nodes");
        let n = x.len();
        let h: Vec<f64> = (0..n - 1).map(|k| x[k + 1] - x[k]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] <= 0.0 {
                    d[k] = 0.0;
                } else {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        MonotoneCubic { x, y, d }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        if t <= self.x[0] {
            return 0;
        }
        if t >= self.x[n - 1] {
            return n - 2;
        }
        match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(k) => k.min(n - 2),
            Err(k) => k - 1,
        }
    }

    fn eval_segment(&self, k: usize, t: f64) -> (f64, f64) {
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let v = h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1];
        let dh00 = 6.0 * s2 - 6.0 * s;
        let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
        let dh01 = -6.0 * s2 + 6.0 * s;
        let dh11 = 3.0 * s2 - 2.0 * s;
        let dv = (dh00 * self.y[k] + dh01 * self.y[k + 1]) / h + dh10 * self.d[k] + dh11 * self.d[k + 1];
        (v, dv)
    }

    /// Value at `t` (cubic extrapolation of the end segments outside the nodes).
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.segment(t);
        if t == self.x[k] {
            return self.y[k];
        }
        if t == self.x[k + 1] {
            return self.y[k + 1];
        }
        self.eval_segment(k, t).0
    }

    /// Derivative at `t`.
    pub fn derivative(&self, t: f64) -> f64 {
        let k = self.segment(t);
        self.eval_segment(k, t).1
    }

    /// Solves `eval(t) = target` for monotone data, to absolute tolerance `tol` in `t`.
    /// Returns `None` when `target` lies outside the tabulated range.
    pub fn invert(&self, target: f64, tol: f64) -> Option<f64> {
        let n = self.y.len();
        let increasing = self.y[n - 1] >= self.y[0];
        let (lo_v, hi_v) = if increasing {
            (self.y[0], self.y[n - 1])
        } else {
            (self.y[n - 1], self.y[0])
        };
        if target < lo_v || target > hi_v {
            return None;
        }
        // bracket segment
        let (mut a, mut b) = (0usize, n - 1);
        while b - a > 1 {
            let m = (a + b) / 2;
            let above = if increasing {
                self.y[m] <= target
            } else {
                self.y[m] >= target
            };
            if above {
                a = m;
            } else {
                b = m;
            }
        }
        let k = a;
        let (mut lo, mut hi) = (self.x[k], self.x[k + 1]);
        if self.y[k] == target {
            return Some(self.x[k]);
        }
        if self.y[k + 1] == target {
            return Some(self.x[k + 1]);
        }
        let sign = if increasing { 1.0 } else { -1.0 };
        let ylo = self.y[k];
        let yhi = self.y[k + 1];
        let mut t = lo + (target - ylo) / (yhi - ylo) * (hi - lo);
        for _ in 0..100 {
            let (v, dv) = self.eval_segment(k, t);
            let f = sign * (v - target);
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let mut next = if dv != 0.0 { t - (v - target) / dv } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - t).abs();
            t = next;
            if step < tol || hi - lo < tol {
                break;
            }
        }
        Some(t)
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}
