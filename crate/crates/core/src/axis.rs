use serde::{Deserialize, Serialize};

/// Uniform sample axis `v_k = start + k * step`, `k < len`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearAxis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl LinearAxis {
    pub fn new(start: f64, step: f64, len: usize) -> Self {
        LinearAxis { start, step, len }
    }

    /// Axis of `len` samples with `step`, with sample `len / 2` at `centre`.
    pub fn centred(centre: f64, step: f64, len: usize) -> Self {
        LinearAxis {
            start: centre - (len / 2) as f64 * step,
            step,
            len,
        }
    }

    #[inline]
    pub fn value(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    /// Fractional index of `v`.
    #[inline]
    pub fn position(&self, v: f64) -> f64 {
        (v - self.start) / self.step
    }

    pub fn last(&self) -> f64 {
        self.value(self.len.saturating_sub(1))
    }

    /// Nearest sample index, if `v` lies within half a step of the axis.
    pub fn nearest(&self, v: f64) -> Option<usize> {
        let p = self.position(v).round();
        if p < 0.0 || p > self.len as f64 - 1.0 {
            None
        } else {
            Some(p as usize)
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.value(k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centred_axis_places_centre_at_half_length() {
        let a = LinearAxis::centred(10.0, 0.5, 8);
        assert_eq!(a.value(4), 10.0);
        assert_eq!(a.nearest(10.2), Some(4));
        assert_eq!(a.nearest(-100.0), None);
        assert_eq!(a.position(a.value(3)), 3.0);
    }
}
