//! Connections of `εy″ + y′ = y(t − τ)(1 − y)`: from 0 to 1 along the
//! unstable direction `e^{z₁t}` of the zero state, and from the periodic
//! orbit to 1 along its unstable Floquet direction. Each maps back to a wave
//! profile through `φ(s) = 1 − y(−s/c)`, `c = ε^{−1/2}`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::periodic::{find_periodic, floquet, PeriodicOptions};
use super::wright::{integrate_until, steps_per_delay};
use super::{log_slope, mid_value_in_segment};
use crate::error::{Error, Result};
use crate::profiles::{Profile, RightTail};
use crate::spectral::{eps_advanced_roots, leading_real_root};

const MIN_LADDER_STEP: f64 = 1e-6;
const BOUNDARY_TOL: f64 = 1e-3;
const PHASE_TOL: f64 = 1e-13;
const ESCAPE_LEVEL: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConnectionKind {
    #[serde(rename = "heteroclinic-0-to-1")]
    ZeroToOne,
    #[serde(rename = "periodic-to-point")]
    PeriodicToPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionOptions {
    /// Mesh intervals per delay for the zero-to-one collocation.
    pub steps_per_delay: usize,
    /// Weight of `Re e^{z₂t}` relative to `e^{z₁t}` in the left boundary data;
    /// nonzero values select an oscillating member of the connection family.
    pub left_mode_ratio: f64,
    /// Also solve on the halved mesh and report the largest difference.
    pub estimate_error: bool,
    /// Size of the unstable-direction kick off the periodic orbit.
    pub delta: f64,
    pub settle_tol: f64,
    /// How long `|y − 1| < settle_tol` must hold.
    pub settle_time: f64,
    pub max_time: f64,
    pub n_disc: usize,
    pub periodic: PeriodicOptions,
}

impl Default for ConnectionOptions {
    fn default() -> Self {
        Self {
            steps_per_delay: 500,
            left_mode_ratio: 0.0,
            estimate_error: true,
            delta: 1e-4,
            settle_tol: 1e-3,
            settle_time: 25.0,
            max_time: 600.0,
            n_disc: 150,
            periodic: PeriodicOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSolution {
    pub eps: f64,
    pub t0: f64,
    pub dt: f64,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    /// Sup of the discrete defect per unit time on the mesh.
    pub residual: f64,
    /// Largest difference from the solution on the halved mesh.
    pub refinement_gap: Option<f64>,
    /// Fitted exponential rate at the non-periodic end.
    pub decay_rate: Option<f64>,
    /// The rate predicted by the linearization there.
    pub expected_rate: f64,
    pub left_value: f64,
    pub right_value: f64,
    pub monotone: bool,
    /// Sign of the kick off the periodic orbit.
    pub delta_sign: Option<f64>,
    pub orbit_period: Option<f64>,
    /// Time after which `|y − 1|` stays below the settling tolerance.
    pub settled_at: Option<f64>,
}

impl ConnectionSolution {
    pub fn t(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.y.len() - 1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        super::cubic_at(&self.y, self.t0, self.dt, t)
    }

    /// Sup distance to `other` on the common part of the two meshes.
    pub fn distance(&self, other: &ConnectionSolution) -> f64 {
        let (a, b) = (self.t0.max(other.t0), self.t_end().min(other.t_end()));
        let n = 4000;
        (0..=n)
            .map(|i| {
                let t = a + (b - a) * i as f64 / n as f64;
                (self.eval(t) - other.eval(t)).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionRun {
    pub tau: f64,
    pub eps_ladder: Vec<f64>,
    pub solutions: Vec<ConnectionSolution>,
    pub kind: ConnectionKind,
    pub decay_fits: Vec<Option<f64>>,
    /// `ε^{−1/2}` at the largest positive `ε` reached; an empirical stand-in
    /// for the speed threshold above which the connections persist.
    pub c_star_proxy: Option<f64>,
}

/// `{0, ε/10, ε/2, ε}`, or `{0}` when `ε = 0`.
pub fn default_ladder(eps: f64) -> Vec<f64> {
    if eps > 0.0 {
        vec![0.0, 0.1 * eps, 0.5 * eps, eps]
    } else {
        vec![0.0]
    }
}

/// Solve along an `ε` ladder with warm starts; a failed step is bisected
/// down to a width of `1e−6` before the run aborts.
pub fn heteroclinic(tau: f64, ladder: &[f64], kind: ConnectionKind, opts: &ConnectionOptions) -> Result<ConnectionRun> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    if ladder.is_empty() || ladder.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(Error::Domain("the eps ladder must be a nonempty list of nonnegative values".into()));
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("the eps ladder must be strictly increasing".into()));
    }
    let mut done: Vec<ConnectionSolution> = Vec::new();
    let mut warm: Option<f64> = None;
    let mut pending: Vec<f64> = ladder.iter().rev().copied().collect();
    while let Some(target) = pending.pop() {
        let attempt = match kind {
            ConnectionKind::ZeroToOne => zero_to_one(tau, target, opts, warm),
            ConnectionKind::PeriodicToPoint => periodic_to_point(tau, target, opts).map(|s| (s, 0.0)),
        };
        match attempt {
            Ok((sol, k)) => {
                warm = Some(k);
                done.push(sol);
            }
            Err(e) => {
                let prev = done.last().map(|s| s.eps);
                match prev {
                    Some(p) if target - p > MIN_LADDER_STEP && e.is_numeric() => {
                        pending.push(target);
                        pending.push(0.5 * (p + target));
                    }
                    _ => return Err(e),
                }
            }
        }
    }
    let decay_fits = done.iter().map(|s| s.decay_rate).collect();
    let c_star_proxy = done.iter().rev().find(|s| s.eps > 0.0).map(|s| s.eps.powf(-0.5));
    Ok(ConnectionRun {
        tau,
        eps_ladder: done.iter().map(|s| s.eps).collect(),
        solutions: done,
        kind,
        decay_fits,
        c_star_proxy,
    })
}

struct Marching {
    tau: f64,
    eps: f64,
    m: usize,
    h: f64,
    /// Half-length of the domain, a multiple of `τ`.
    l: f64,
    z1: f64,
    z2: C64,
    ratio: f64,
}

impl Marching {
    fn nodes(&self) -> usize {
        ((2.0 * self.l + self.tau) / self.h).round() as usize + 1
    }

    fn zero_index(&self) -> usize {
        ((self.l + self.tau) / self.h).round() as usize
    }

    /// Trapezoidal collocation of `y′ = w`, `εw′ = −w + y(t − τ)(1 − y)`
    /// (or `y′ = y(t − τ)(1 − y)` when `ε = 0`) from left data of size `e^{ln_k}`.
    /// Each step is linear in the new unknowns once the delayed value is known.
    fn march(&self, ln_k: f64) -> (Vec<f64>, Vec<f64>) {
        let (m, h, eps) = (self.m, self.h, self.eps);
        let n = self.nodes();
        let k = ln_k.exp();
        let mut y = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for i in 0..=m {
            let s = (i as f64 - m as f64) * h;
            let e2 = (self.z2 * s).exp();
            y.push(k * ((self.z1 * s).exp() + self.ratio * e2.re));
            w.push(k * (self.z1 * (self.z1 * s).exp() + self.ratio * (self.z2 * e2).re));
        }
        let hh = 0.5 * h;
        for i in m..n - 1 {
            let (dc, dn) = (y[i - m], y[i + 1 - m]);
            let fi = dc * (1.0 - y[i]);
            if eps == 0.0 {
                let yn = (y[i] + hh * (fi + dn)) / (1.0 + hh * dn);
                y.push(yn);
                w.push(dn * (1.0 - yn));
            } else {
                let r1 = y[i] + hh * w[i];
                let r2 = eps * w[i] + hh * (-w[i] + fi + dn);
                let det = eps + hh + hh * hh * dn;
                y.push((r1 * (eps + hh) + hh * r2) / det);
                w.push((r2 - hh * dn * r1) / det);
            }
        }
        (y, w)
    }

    fn defect(&self, y: &[f64], w: &[f64]) -> f64 {
        let (m, h, eps) = (self.m, self.h, self.eps);
        let mut r: f64 = 0.0;
        for i in m..y.len() - 1 {
            let f0 = y[i - m] * (1.0 - y[i]);
            let f1 = y[i + 1 - m] * (1.0 - y[i + 1]);
            if eps == 0.0 {
                r = r.max(((y[i + 1] - y[i]) / h - 0.5 * (f0 + f1)).abs());
            } else {
                let e1 = (y[i + 1] - y[i]) / h - 0.5 * (w[i] + w[i + 1]);
                let e2 = eps * (w[i + 1] - w[i]) / h - 0.5 * (-w[i] + f0 - w[i + 1] + f1);
                r = r.max(e1.abs()).max(e2.abs());
            }
        }
        r
    }

    fn phase(&self, ln_k: f64) -> f64 {
        self.march(ln_k).0[self.zero_index()] - 0.5
    }

    /// `ln κ` with `y(0) = 1/2`, by bracketing and regula falsi (Illinois).
    fn solve_phase(&self, guess: f64) -> Result<f64> {
        let mut a = guess;
        let mut fa = self.phase(a);
        let dir = if fa < 0.0 { 1.0 } else { -1.0 };
        let mut b = a;
        let mut fb = fa;
        let mut stride = 1.0;
        for _ in 0..80 {
            if fa * fb <= 0.0 && a != b {
                break;
            }
            a = b;
            fa = fb;
            b += dir * stride;
            fb = self.phase(b);
            stride *= 1.5;
        }
        if fa * fb > 0.0 {
            return Err(Error::NoConvergence {
                iterations: 80,
                residual: fb.abs(),
            });
        }
        let mut side = 0;
        for _ in 0..200 {
            let c = (a * fb - b * fa) / (fb - fa);
            let fc = self.phase(c);
            if fc.abs() <= PHASE_TOL || (b - a).abs() <= 1e-15 {
                return Ok(c);
            }
            if fc * fb < 0.0 {
                a = b;
                fa = fb;
                side = 0;
            } else {
                fa *= if side == 1 { 0.5 } else { 1.0 };
                side = 1;
            }
            b = c;
            fb = fc;
        }
        Err(Error::NoConvergence {
            iterations: 200,
            residual: fb.abs(),
        })
    }
}

fn leading_complex_root(tau: f64, eps: f64) -> Result<C64> {
    let rep = eps_advanced_roots(tau, eps, 0.0)?;
    rep.roots
        .iter()
        .filter(|r| r.im > 1e-8)
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .map(|r| r.z())
        .ok_or_else(|| Error::Domain(format!("no oscillating mode with Re z > 0 at tau = {tau}")))
}

fn zero_to_one(tau: f64, eps: f64, opts: &ConnectionOptions, warm: Option<f64>) -> Result<(ConnectionSolution, f64)> {
    let z1 = leading_real_root(tau, eps)?;
    let z2 = if opts.left_mode_ratio != 0.0 {
        leading_complex_root(tau, eps)?
    } else {
        C64::new(0.0, 0.0)
    };
    let m = opts.steps_per_delay.max(steps_per_delay(tau, eps));
    let l = ((20.0 * tau).max(12.0 / z1) / tau).ceil() * tau;
    let mk = |m: usize| Marching {
        tau,
        eps,
        m,
        h: tau / m as f64,
        l,
        z1,
        z2,
        ratio: opts.left_mode_ratio,
    };
    let grid = mk(m);
    let guess = warm.unwrap_or(0.5f64.ln() - z1 * l);
    let ln_k = grid.solve_phase(guess)?;
    let (y, w) = grid.march(ln_k);
    let refinement_gap = if opts.estimate_error {
        let fine = mk(2 * m);
        let (yf, _) = fine.march(fine.solve_phase(ln_k)?);
        Some(y.iter().enumerate().map(|(i, v)| (v - yf[2 * i]).abs()).fold(0.0, f64::max))
    } else {
        None
    };
    let t0 = -l - tau;
    let h = grid.h;
    let (left, right) = (y[m], y[y.len() - 1]);
    if left.abs() > BOUNDARY_TOL || (right - 1.0).abs() > BOUNDARY_TOL || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: (right - 1.0).abs().max(left.abs()),
        });
    }
    let times: Vec<f64> = (0..y.len()).map(|i| t0 + i as f64 * h).collect();
    let start = 2 * m;
    let (decay_rate, expected_rate) = if opts.left_mode_ratio == 0.0 {
        (log_slope(&times[start..], &y[start..], 0.0, 1e-3), z1)
    } else {
        (envelope_slope(&times[start..], &y[start..], 1e-3), z2.re)
    };
    let sol = ConnectionSolution {
        eps,
        t0,
        dt: h,
        residual: grid.defect(&y, &w),
        refinement_gap,
        decay_rate,
        expected_rate,
        left_value: left,
        right_value: right,
        monotone: y[m..].windows(2).all(|p| p[1] >= p[0]),
        delta_sign: None,
        orbit_period: None,
        settled_at: None,
        y,
        dy: w,
    };
    Ok((sol, ln_k))
}

/// Slope of `ln|y|` through the local maxima of `|y|` below `hi`.
fn envelope_slope(t: &[f64], y: &[f64], hi: f64) -> Option<f64> {
    let mut tt = Vec::new();
    let mut vv = Vec::new();
    for i in 1..y.len() - 1 {
        let (a, b, c) = (y[i - 1].abs(), y[i].abs(), y[i + 1].abs());
        if b >= a && b > c && b <= hi && b > 0.0 {
            tt.push(t[i]);
            vv.push(b.ln());
        }
    }
    if tt.len() < 3 {
        return None;
    }
    let n = tt.len() as f64;
    let mt = tt.iter().sum::<f64>() / n;
    let mv = vv.iter().sum::<f64>() / n;
    let sxy: f64 = tt.iter().zip(&vv).map(|(a, b)| (a - mt) * (b - mv)).sum();
    let sxx: f64 = tt.iter().map(|a| (a - mt).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Rate of approach to 1: the root of `εz² + z + 1 = 0` nearest 0.
fn settling_rate(eps: f64) -> f64 {
    if eps > 0.0 {
        (-1.0 + (1.0 - 4.0 * eps).max(0.0).sqrt()) / (2.0 * eps)
    } else {
        -1.0
    }
}

fn periodic_to_point(tau: f64, eps: f64, opts: &ConnectionOptions) -> Result<ConnectionSolution> {
    let mut orbit = find_periodic(tau, eps, &opts.periodic)?;
    floquet(&mut orbit, opts.n_disc)?;
    let mode = orbit
        .unstable_mode
        .clone()
        .ok_or_else(|| Error::Hyperbolicity("the periodic orbit has no real unstable multiplier".into()))?;
    let series = orbit.series();
    let m = steps_per_delay(tau, eps).max(200);
    let dt = tau / m as f64;
    for sign in [1.0, -1.0] {
        let kick = sign * opts.delta;
        let history = |s: f64| {
            let d = if s == 0.0 { series.derivative_at(0.0, 1) + kick * mode.derivative } else { 0.0 };
            (series.eval(s) + kick * mode.eval(tau, s), d)
        };
        let mut escaped = false;
        let mut since: Option<f64> = None;
        let run = integrate_until(tau, eps, history, opts.max_time, m, |t, y| {
            if y < ESCAPE_LEVEL {
                escaped = true;
                return true;
            }
            if (y - 1.0).abs() < opts.settle_tol {
                let s = *since.get_or_insert(t);
                t - s >= opts.settle_time
            } else {
                since = None;
                false
            }
        });
        let tr = match run {
            Ok(tr) => tr,
            Err(Error::Divergence { .. }) => continue,
            Err(e) => return Err(e),
        };
        if escaped {
            continue;
        }
        let Some(settled_at) = since.filter(|s| tr.t_end() - s >= opts.settle_time) else {
            return Err(Error::NoConvergence {
                iterations: tr.len(),
                residual: (tr.y[tr.len() - 1] - 1.0).abs(),
            });
        };
        let residual = integral_defect(eps, m, dt, &tr.y, &tr.dy);
        // One exact period of the orbit before the history, so the mapped
        // profile ends with a clean period.
        let pre = (orbit.period / dt).ceil() as usize;
        let t0 = tr.t0 - pre as f64 * dt;
        let mut y: Vec<f64> = (0..pre).map(|i| series.eval(t0 + i as f64 * dt)).collect();
        let mut dy: Vec<f64> = (0..pre).map(|i| series.derivative_at(t0 + i as f64 * dt, 1)).collect();
        y.extend_from_slice(&tr.y);
        dy.extend_from_slice(&tr.dy);
        let times: Vec<f64> = (0..y.len()).map(|i| t0 + i as f64 * dt).collect();
        let gap: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
        let tail = times.iter().position(|&t| t >= settled_at).unwrap_or(0);
        let decay_rate = log_slope(&times[tail..], &gap[tail..], 1e-10, 1e-4);
        return Ok(ConnectionSolution {
            eps,
            t0,
            dt,
            residual,
            refinement_gap: None,
            decay_rate,
            expected_rate: settling_rate(eps),
            left_value: y[0],
            right_value: y[y.len() - 1],
            monotone: false,
            delta_sign: Some(sign),
            orbit_period: Some(orbit.period),
            settled_at: Some(settled_at),
            y,
            dy,
        });
    }
    Err(Error::NoConvergence {
        iterations: 2,
        residual: f64::INFINITY,
    })
}

/// Sup over steps of the Simpson-rule defect of the integrated equation, per unit time.
fn integral_defect(eps: f64, m: usize, dt: f64, y: &[f64], w: &[f64]) -> f64 {
    let mut r: f64 = 0.0;
    for i in m..y.len() - 1 {
        let k = i - m;
        let (d0, dh, d1) = (y[k], mid_value_in_segment(y, k, m), y[k + 1]);
        let (y0, yh, y1) = (y[i], mid_value_in_segment(y, i, m), y[i + 1]);
        let f = |d: f64, v: f64| d * (1.0 - v);
        let simpson = |a: f64, b: f64, c: f64| dt / 6.0 * (a + 4.0 * b + c);
        if eps == 0.0 {
            let e = y1 - y0 - simpson(f(d0, y0), f(dh, yh), f(d1, y1));
            r = r.max(e.abs() / dt);
        } else {
            let (w0, wh, w1) = (w[i], mid_value_in_segment(w, i, m), w[i + 1]);
            let e1 = y1 - y0 - simpson(w0, wh, w1);
            let e2 = eps * (w1 - w0) - simpson(-w0 + f(d0, y0), -wh + f(dh, yh), -w1 + f(d1, y1));
            r = r.max(e1.abs() / dt).max(e2.abs() / dt);
        }
    }
    r
}

/// The wave profile `φ(s) = 1 − y(−s/c)` of the solution with `ε = c⁻²`.
pub fn to_wavefront(run: &ConnectionRun, c: f64) -> Result<Profile> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("speed must be positive and finite, got {c}")));
    }
    let eps = c.powi(-2);
    let sol = run
        .solutions
        .iter()
        .find(|s| s.eps > 0.0 && (s.eps - eps).abs() <= 1e-9 * eps)
        .ok_or_else(|| {
            if run.solutions.iter().all(|s| s.eps == 0.0) {
                Error::Domain("an eps = 0 connection has no finite wave speed".into())
            } else {
                Error::Domain(format!("no solution with eps = {eps} (c = {c}) in this run"))
            }
        })?;
    let n = sol.y.len();
    let values: Vec<f64> = (0..n).map(|i| 1.0 - sol.y[n - 1 - i]).collect();
    let tail = match run.kind {
        ConnectionKind::ZeroToOne => RightTail::Constant(1.0),
        ConnectionKind::PeriodicToPoint => RightTail::Periodic {
            period: c * sol.orbit_period.unwrap_or(f64::NAN),
        },
    };
    let mut p = Profile::new(-c * sol.t_end(), c * sol.dt, values, 0.0, tail)?;
    p.diagnostics.monotone = p.is_monotone(0.0);
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailStats {
    pub period_estimate: Option<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub critical_points: usize,
}

/// Shape of the last `period` of a profile: mean, range, critical points,
/// and the mean spacing of upward crossings of 1 over the last 40% of the grid.
pub fn tail_stats(p: &Profile, period: f64) -> Result<TailStats> {
    let n = p.len();
    let k = (period / p.dt).round() as usize;
    if k < 8 || k >= n {
        return Err(Error::Measurement(format!("period {period} does not fit the profile grid")));
    }
    let last = &p.values[n - k..];
    let mean = last.iter().sum::<f64>() / k as f64;
    let (min, max) = last.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let d: Vec<f64> = (n - k..n).map(|i| p.values[i] - p.values[i - 1]).collect();
    let critical_points = (0..k).filter(|&i| d[i] * d[(i + 1) % k] < 0.0).count();
    let from = n - (2 * n) / 5;
    let ups: Vec<f64> = (from.max(1)..n)
        .filter(|&i| p.values[i - 1] < 1.0 && p.values[i] >= 1.0)
        .map(|i| {
            let (a, b) = (p.values[i - 1], p.values[i]);
            p.t(i - 1) + p.dt * (1.0 - a) / (b - a)
        })
        .collect();
    let period_estimate = (ups.len() >= 2).then(|| (ups[ups.len() - 1] - ups[0]) / (ups.len() - 1) as f64);
    Ok(TailStats {
        period_estimate,
        mean,
        min,
        max,
        critical_points,
    })
}
