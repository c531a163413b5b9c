use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SNAP: f64 = 1e-9;

/// How a profile continues to the right of its grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RightTail {
    Constant(f64),
    /// The last `period` of the grid repeats forever.
    Periodic { period: f64 },
    /// No extension; evaluating past the grid is a coverage error.
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub residual_sup: f64,
    pub monotone: bool,
    pub p: f64,
    #[serde(rename = "P")]
    pub big_p: f64,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            residual_sup: f64::NAN,
            monotone: false,
            p: f64::NAN,
            big_p: f64::NAN,
        }
    }
}

/// A function of one variable sampled on a uniform grid `t0 + i·dt`, with
/// declared behaviour beyond both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub left_limit: f64,
    pub right_tail: RightTail,
    pub diagnostics: Diagnostics,
}

impl Profile {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, left_limit: f64, right_tail: RightTail) -> Result<Self> {
        if !(dt > 0.0) || !t0.is_finite() {
            return Err(Error::Domain(format!("invalid grid t0 = {t0}, dt = {dt}")));
        }
        if values.len() < 2 {
            return Err(Error::Domain("a profile needs at least two grid points".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite profile value {v}")));
        }
        if let RightTail::Periodic { period } = right_tail {
            let span = dt * (values.len() - 1) as f64;
            if !(period > 0.0) || period > span {
                return Err(Error::Domain(format!(
                    "periodic tail of period {period} needs a grid longer than one period (span {span})"
                )));
            }
        }
        Ok(Self {
            t0,
            dt,
            values,
            left_limit,
            right_tail,
            diagnostics: Diagnostics::default(),
        })
    }

    /// Samples `f` at `n` nodes starting from `t0`.
    pub fn from_fn<F: Fn(f64) -> f64>(
        t0: f64,
        dt: f64,
        n: usize,
        f: F,
        left_limit: f64,
        right_tail: RightTail,
    ) -> Result<Self> {
        let values = (0..n).map(|i| f(t0 + i as f64 * dt)).collect();
        Self::new(t0, dt, values, left_limit, right_tail)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.values.len() - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.t(i)).collect()
    }

    pub fn right_limit(&self) -> Option<f64> {
        match self.right_tail {
            RightTail::Constant(v) => Some(v),
            _ => None,
        }
    }

    /// Grid value with the extension applied to indices outside the grid.
    pub fn node(&self, k: isize) -> f64 {
        let n = self.values.len() as isize;
        if k < 0 {
            self.left_limit
        } else if k < n {
            self.values[k as usize]
        } else {
            match self.right_tail {
                RightTail::Constant(v) => v,
                RightTail::Periodic { period } => {
                    let t = self.t0 + k as f64 * self.dt;
                    self.linear_inside(self.fold(t, period))
                }
                RightTail::Truncated => {
                    let v = &self.values;
                    let m = v.len();
                    if m >= 3 {
                        3.0 * v[m - 1] - 3.0 * v[m - 2] + v[m - 3]
                    } else {
                        2.0 * v[m - 1] - v[m - 2]
                    }
                }
            }
        }
    }

    fn fold(&self, t: f64, period: f64) -> f64 {
        let end = self.t_end();
        if t <= end {
            return t;
        }
        let k = ((t - end) / period).ceil();
        t - k * period
    }

    fn linear_inside(&self, t: f64) -> f64 {
        let x = ((t - self.t0) / self.dt).clamp(0.0, (self.values.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    /// Value at `t` by four-point cubic interpolation, extended outside the grid.
    pub fn value(&self, t: f64) -> Result<f64> {
        let n = self.values.len() as f64;
        let mut x = (t - self.t0) / self.dt;
        if x < -1.0 {
            return Ok(self.left_limit);
        }
        if x > n - 1.0 + SNAP {
            match self.right_tail {
                RightTail::Constant(v) if x >= n => return Ok(v),
                RightTail::Constant(_) => {}
                RightTail::Periodic { period } => {
                    x = (self.fold(t, period) - self.t0) / self.dt;
                }
                RightTail::Truncated => return Err(Error::Coverage { t }),
            }
        }
        Ok(self.interpolate(x))
    }

    /// As [`Profile::value`], holding the last value past a truncated grid.
    pub fn eval(&self, t: f64) -> f64 {
        match self.value(t) {
            Ok(v) => v,
            Err(_) => self.values[self.values.len() - 1],
        }
    }

    fn interpolate(&self, x: f64) -> f64 {
        let r = x.round();
        if (x - r).abs() < SNAP {
            return self.node(r as isize);
        }
        let i = x.floor() as isize;
        let f = x - i as f64;
        let (a, b, c, d) = (
            self.node(i - 1),
            self.node(i),
            self.node(i + 1),
            self.node(i + 2),
        );
        // Lagrange weights on nodes -1, 0, 1, 2.
        let wa = -f * (f - 1.0) * (f - 2.0) / 6.0;
        let wb = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
        let wc = -(f + 1.0) * f * (f - 2.0) / 2.0;
        let wd = (f + 1.0) * f * (f - 1.0) / 6.0;
        wa * a + wb * b + wc * c + wd * d
    }

    /// Centered first differences, using the extension at the two ends.
    pub fn derivative(&self) -> Vec<f64> {
        let h = self.dt;
        (0..self.values.len() as isize)
            .map(|i| (self.node(i + 1) - self.node(i - 1)) / (2.0 * h))
            .collect()
    }

    /// Centered second differences, using the extension at the two ends.
    pub fn second_derivative(&self) -> Vec<f64> {
        let h2 = self.dt * self.dt;
        (0..self.values.len() as isize)
            .map(|i| (self.node(i + 1) - 2.0 * self.node(i) + self.node(i - 1)) / h2)
            .collect()
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0] - tol)
    }

    /// Translate so that the profile becomes `t ↦ φ(t + h)` by moving the grid.
    pub fn shifted(&self, h: f64) -> Profile {
        let mut p = self.clone();
        p.t0 -= h;
        p
    }

    /// First upward crossing of `level`, located by linear interpolation.
    pub fn crossing(&self, level: f64) -> Option<f64> {
        self.values.windows(2).enumerate().find_map(|(i, w)| {
            if w[0] <= level && w[1] > level {
                let f = (level - w[0]) / (w[1] - w[0]);
                Some(self.t(i) + f * self.dt)
            } else {
                None
            }
        })
    }

    /// Resample onto a new uniform grid through [`Profile::eval`].
    pub fn resampled(&self, t0: f64, dt: f64, n: usize) -> Result<Profile> {
        let mut p = Profile::from_fn(t0, dt, n, |t| self.eval(t), self.left_limit, self.right_tail)?;
        p.diagnostics = self.diagnostics;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Profile {
        Profile::from_fn(0.0, 0.5, 21, |t| t, 0.0, RightTail::Truncated).unwrap()
    }

    #[test]
    fn cubic_interpolation_is_exact_for_cubics() {
        let p = Profile::from_fn(-2.0, 0.1, 41, |t| t * t * t - t, 0.0, RightTail::Truncated).unwrap();
        for &t in &[-1.73, 0.01, 0.55, 1.234] {
            assert!((p.value(t).unwrap() - (t * t * t - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn nodes_are_returned_exactly() {
        let p = line();
        assert_eq!(p.value(3.0).unwrap(), 3.0);
        assert_eq!(p.value(3.0 + 1e-12).unwrap(), 3.0);
    }

    #[test]
    fn extension_and_coverage() {
        let p = line();
        assert_eq!(p.value(-5.0).unwrap(), 0.0);
        assert!(matches!(p.value(11.0), Err(Error::Coverage { .. })));
        let mut q = p.clone();
        q.right_tail = RightTail::Constant(10.0);
        assert_eq!(q.value(50.0).unwrap(), 10.0);
    }

    #[test]
    fn periodic_tail_repeats_last_period() {
        let w = 2.0 * std::f64::consts::PI;
        let p = Profile::from_fn(0.0, w / 200.0, 801, |t| t.sin(), 0.0, RightTail::Periodic { period: w })
            .unwrap();
        for &t in &[4.0 * w + 0.3, 7.5 * w, 10.0 * w + 1.0] {
            assert!((p.value(t).unwrap() - t.sin()).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn shift_moves_the_grid() {
        let p = line();
        let q = p.shifted(1.5);
        assert!((q.value(1.0).unwrap() - p.value(2.5).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn crossing_of_a_line() {
        let p = line();
        assert!((p.crossing(3.3).unwrap() - 3.3).abs() < 1e-12);
        assert!(p.crossing(20.0).is_none());
    }
}
