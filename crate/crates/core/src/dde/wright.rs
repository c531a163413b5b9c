//! Method of steps for `y′ = y(t − τ)(1 − y)` and, when `ε > 0`, for the
//! system `y′ = w`, `εw′ = −w + y(t − τ)(1 − y)`.
//!
//! Classical RK4 on a uniform grid with `τ/dt` integral, so delayed values at
//! whole steps are grid values and those at half steps come from the cubic
//! through the four surrounding nodes.

use serde::{Deserialize, Serialize};

use super::{cubic_at, mid_value_in_segment};
use crate::error::{Error, Result};

pub const BLOW_UP: f64 = 1e6;
const MIN_STEPS: usize = 50;

/// A trajectory sampled on `t0 + i·dt`; the first `τ/dt + 1` nodes are the history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub tau: f64,
    pub eps: f64,
    pub t0: f64,
    pub dt: f64,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.len() - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.t(i)).collect()
    }

    /// Cubic interpolation, clamped to the computed interval.
    pub fn eval(&self, t: f64) -> f64 {
        cubic_at(&self.y, self.t0, self.dt, t)
    }

    pub fn eval_derivative(&self, t: f64) -> f64 {
        cubic_at(&self.dy, self.t0, self.dt, t)
    }

    /// Nodes per delay interval.
    pub fn steps_per_delay(&self) -> usize {
        (self.tau / self.dt).round() as usize
    }
}

/// Smallest number of steps per delay with `dt ≤ τ/50` and, for `ε > 0`, `dt ≤ ε/10`.
pub fn steps_per_delay(tau: f64, eps: f64) -> usize {
    let stiff = if eps > 0.0 { (10.0 * tau / eps).ceil() as usize } else { 0 };
    MIN_STEPS.max(stiff)
}

fn check(tau: f64, eps: f64, t_end: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("eps must be nonnegative, got {eps}")));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::Domain(format!("integration time must be positive, got {t_end}")));
    }
    Ok(())
}

/// Integrate on `[0, t_end]` from the history `s ↦ (y(s), y′(s))` on `[−τ, 0]`;
/// the derivative is used only at `s = 0` and only when `ε > 0`.
pub fn integrate_wright<H>(tau: f64, eps: f64, history: H, t_end: f64) -> Result<Trajectory>
where
    H: Fn(f64) -> (f64, f64),
{
    integrate_until(tau, eps, history, t_end, steps_per_delay(tau, eps), |_, _| false)
}

/// As [`integrate_wright`] with `m` steps per delay, stopping early once
/// `stop(t, y)` returns true.
pub fn integrate_until<H, S>(tau: f64, eps: f64, history: H, t_end: f64, m: usize, mut stop: S) -> Result<Trajectory>
where
    H: Fn(f64) -> (f64, f64),
    S: FnMut(f64, f64) -> bool,
{
    check(tau, eps, t_end)?;
    if m < steps_per_delay(tau, eps) {
        return Err(Error::StepSize(format!(
            "{m} steps per delay violate dt <= min(tau/50, eps/10)"
        )));
    }
    let dt = tau / m as f64;
    let steps = (t_end / dt).ceil() as usize;
    let mut y = Vec::with_capacity(m + 1 + steps);
    let mut dy = Vec::with_capacity(m + 1 + steps);
    for i in 0..=m {
        let (v, d) = history(-tau + i as f64 * dt);
        y.push(v);
        dy.push(d);
    }
    let mut w = if eps > 0.0 { history(0.0).1 } else { 0.0 };
    if eps == 0.0 {
        dy[m] = y[0] * (1.0 - y[m]);
    } else {
        dy[m] = w;
    }
    for step in 0..steps {
        let i = m + step;
        let k = i - m;
        let (d0, dh, d1) = (y[k], mid_value_in_segment(&y, k, m), y[k + 1]);
        let yi = y[i];
        let (ynew, dnew) = if eps == 0.0 {
            let f = |d: f64, v: f64| d * (1.0 - v);
            let k1 = f(d0, yi);
            let k2 = f(dh, yi + 0.5 * dt * k1);
            let k3 = f(dh, yi + 0.5 * dt * k2);
            let k4 = f(d1, yi + dt * k3);
            let yn = yi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            (yn, d1 * (1.0 - yn))
        } else {
            let f = |d: f64, v: f64, wv: f64| (wv, (-wv + d * (1.0 - v)) / eps);
            let (a1, b1) = f(d0, yi, w);
            let (a2, b2) = f(dh, yi + 0.5 * dt * a1, w + 0.5 * dt * b1);
            let (a3, b3) = f(dh, yi + 0.5 * dt * a2, w + 0.5 * dt * b2);
            let (a4, b4) = f(d1, yi + dt * a3, w + dt * b3);
            let yn = yi + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            w += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
            (yn, w)
        };
        let t = (step + 1) as f64 * dt;
        if !ynew.is_finite() || ynew.abs() > BLOW_UP {
            return Err(Error::Divergence { time: t, value: ynew.abs() });
        }
        y.push(ynew);
        dy.push(dnew);
        if stop(t, ynew) {
            break;
        }
    }
    Ok(Trajectory {
        tau,
        eps,
        t0: -tau,
        dt,
        y,
        dy,
    })
}
