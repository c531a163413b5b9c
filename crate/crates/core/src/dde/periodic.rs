//! Slowly oscillating periodic orbits of `εy″ + y′ = y(t − τ)(1 − y)` for
//! `τ` beyond the Hopf point `3π/2`, their Floquet multipliers and the
//! periodic solution of the formal adjoint.
//!
//! Orbits are computed by Fourier collocation on `N` equispaced nodes of one
//! period: the delay becomes an exact phase shift of the trigonometric
//! interpolant, and the period is an unknown fixed by an integral phase
//! condition against the previous iterate.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::linear::{self, Coefficients, FineGrid};
use super::cubic_at;
use crate::error::{Error, Result};

const MESH_POINTS: usize = 400;
const HOPF_TAU: f64 = 1.5 * PI;
const HYPERBOLICITY_TOL: f64 = 1e-2;
const MIN_AMPLITUDE: f64 = 1e-6;

/// Amplitude of the bifurcating orbit to leading order in `τ − 3π/2`.
pub fn hopf_amplitude(tau: f64) -> f64 {
    (20.0 * (tau - HOPF_TAU).max(0.0) / (4.5 * PI + 1.0)).sqrt()
}

/// Trigonometric polynomial `a₀ + Σ aₖcos(kθt) + bₖsin(kθt)`, `θ = 2π/ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSeries {
    pub omega: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl TrigSeries {
    /// Interpolant of values at `t_j = jω/N`, `N` odd.
    pub fn from_nodes(omega: f64, v: &[f64]) -> Self {
        let n = v.len();
        let kmax = (n - 1) / 2;
        let mut a = vec![0.0; kmax + 1];
        let mut b = vec![0.0; kmax + 1];
        a[0] = v.iter().sum::<f64>() / n as f64;
        for k in 1..=kmax {
            for (j, vj) in v.iter().enumerate() {
                let x = 2.0 * PI * (k * j) as f64 / n as f64;
                a[k] += 2.0 * vj * x.cos() / n as f64;
                b[k] += 2.0 * vj * x.sin() / n as f64;
            }
        }
        Self { omega, a, b }
    }

    fn theta(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// The `d`-th derivative at `t`.
    pub fn derivative_at(&self, t: f64, d: u32) -> f64 {
        let th = self.theta();
        let mut s = if d == 0 { self.a[0] } else { 0.0 };
        for k in 1..self.a.len() {
            let w = k as f64 * th;
            let (sn, cs) = (w * t).sin_cos();
            let (c, si) = match d % 4 {
                0 => (cs, sn),
                1 => (-sn, cs),
                2 => (-cs, -sn),
                _ => (sn, -cs),
            };
            s += w.powi(d as i32) * (self.a[k] * c + self.b[k] * si);
        }
        s
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.derivative_at(t, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
}

impl Multiplier {
    fn new(z: C64) -> Self {
        Self {
            re: z.re,
            im: z.im,
            modulus: z.norm(),
        }
    }
}

/// Eigenfunction of the period map for the unstable multiplier, on the
/// history mesh of `[−τ, 0]` (plus the derivative at 0 when `ε > 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstableMode {
    pub multiplier: f64,
    pub history: Vec<f64>,
    pub derivative: f64,
}

impl UnstableMode {
    /// History value at `s ∈ [−τ, 0]`.
    pub fn eval(&self, tau: f64, s: f64) -> f64 {
        let n = self.history.len() - 1;
        cubic_at(&self.history, -tau, tau / n as f64, s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub tau: f64,
    pub eps: f64,
    pub period: f64,
    /// `ω(ε) = ω₀(1 + γ)` with `ω₀` the period at `ε = 0`.
    pub gamma: f64,
    /// Collocation values at `t_j = jω/N`.
    pub nodes: Vec<f64>,
    /// `(t, p, p′)` on one closed period.
    pub mesh: Vec<[f64; 3]>,
    pub amplitude: f64,
    pub hopf_amplitude: f64,
    pub residual: f64,
    pub last_correction: f64,
    pub newton_iterations: usize,
    /// Sorted by decreasing modulus; empty until [`floquet`] runs.
    pub multipliers: Vec<Multiplier>,
    pub floquet_mesh: Option<usize>,
    pub unstable_mode: Option<UnstableMode>,
    /// `(t, p*)` on one closed period, normalized by `∫p′p* = 1`.
    pub adjoint: Option<Vec<[f64; 2]>>,
    pub adjoint_mismatch: Option<f64>,
}

impl PeriodicOrbit {
    pub fn series(&self) -> TrigSeries {
        TrigSeries::from_nodes(self.period, &self.nodes)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.series().eval(t)
    }

    /// Multiplier closest to 1.
    pub fn trivial_multiplier(&self) -> Option<Multiplier> {
        self.multipliers.iter().copied().min_by(|a, b| {
            let da = C64::new(a.re - 1.0, a.im).norm();
            let db = C64::new(b.re - 1.0, b.im).norm();
            da.total_cmp(&db)
        })
    }

    /// Multipliers with modulus above `1 + tol`.
    pub fn unstable_count(&self, tol: f64) -> usize {
        self.multipliers.iter().filter(|m| m.modulus > 1.0 + tol).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOptions {
    /// Collocation nodes per period (odd).
    pub nodes: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Largest `ε` increment of the continuation from `ε = 0`.
    pub eps_step: f64,
}

impl Default for PeriodicOptions {
    fn default() -> Self {
        Self {
            nodes: 65,
            tol: 1e-12,
            max_iter: 40,
            eps_step: 1e-3,
        }
    }
}

struct Collocation {
    n: usize,
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
}

impl Collocation {
    fn new(n: usize) -> Self {
        let kmax = (n - 1) / 2;
        let mut d1 = DMatrix::zeros(n, n);
        let mut d2 = DMatrix::zeros(n, n);
        for j in 0..n {
            for l in 0..n {
                let x = (j as f64 - l as f64) / n as f64;
                let (mut s1, mut s2) = (0.0, 0.0);
                for k in 1..=kmax {
                    let w = 2.0 * PI * k as f64;
                    s1 -= 2.0 * w * (w * x).sin();
                    s2 -= 2.0 * w * w * (w * x).cos();
                }
                d1[(j, l)] = s1 / n as f64;
                d2[(j, l)] = s2 / n as f64;
            }
        }
        Self { n, d1, d2 }
    }

    /// Shift by `θ` periods, `(Sv)_j = p(s_j − θ)`, and its `θ`-derivative.
    fn shift(&self, theta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        let kmax = (n - 1) / 2;
        let mut s = DMatrix::zeros(n, n);
        let mut ds = DMatrix::zeros(n, n);
        for j in 0..n {
            for l in 0..n {
                let x = (j as f64 - l as f64) / n as f64 - theta;
                let (mut a, mut b) = (1.0, 0.0);
                for k in 1..=kmax {
                    let w = 2.0 * PI * k as f64;
                    a += 2.0 * (w * x).cos();
                    b += 2.0 * w * (w * x).sin();
                }
                s[(j, l)] = a / n as f64;
                ds[(j, l)] = b / n as f64;
            }
        }
        (s, ds)
    }

    /// Residual of `ε/ω²·p̈ + ṗ/ω − p(s − τ/ω)(1 − p)` in rescaled time `s = t/ω`.
    fn residual(&self, tau: f64, eps: f64, v: &DVector<f64>, omega: f64) -> DVector<f64> {
        let (s, _) = self.shift(tau / omega);
        let sv = &s * v;
        let mut r = &self.d2 * v * (eps / (omega * omega)) + &self.d1 * v / omega;
        for j in 0..self.n {
            r[j] -= sv[j] * (1.0 - v[j]);
        }
        r
    }

    fn newton(
        &self,
        tau: f64,
        eps: f64,
        mut v: DVector<f64>,
        mut omega: f64,
        opts: &PeriodicOptions,
    ) -> Result<(DVector<f64>, f64, f64, f64, usize)> {
        let n = self.n;
        let anchor = &self.d1 * &v / n as f64;
        let mut last = f64::INFINITY;
        for it in 0..opts.max_iter {
            let (s, ds) = self.shift(tau / omega);
            let sv = &s * &v;
            let dsv = &ds * &v;
            let d1v = &self.d1 * &v;
            let d2v = &self.d2 * &v;
            let mut r = DVector::zeros(n + 1);
            let mut jac = DMatrix::zeros(n + 1, n + 1);
            let e2 = eps / (omega * omega);
            for j in 0..n {
                r[j] = e2 * d2v[j] + d1v[j] / omega - sv[j] * (1.0 - v[j]);
                for l in 0..n {
                    jac[(j, l)] = e2 * self.d2[(j, l)] + self.d1[(j, l)] / omega - (1.0 - v[j]) * s[(j, l)];
                }
                jac[(j, j)] += sv[j];
                jac[(j, n)] = -2.0 * e2 / omega * d2v[j] - d1v[j] / (omega * omega)
                    + (1.0 - v[j]) * dsv[j] * tau / (omega * omega);
            }
            r[n] = anchor.dot(&v);
            for l in 0..n {
                jac[(n, l)] = anchor[l];
            }
            let res = r.amax();
            if res <= opts.tol {
                return Ok((v, omega, res, last, it));
            }
            let delta = jac
                .lu()
                .solve(&(-r))
                .ok_or_else(|| Error::Numeric("singular collocation Jacobian".into()))?;
            last = delta.amax();
            for j in 0..n {
                v[j] += delta[j];
            }
            omega += delta[n];
            if !(omega > 0.0) || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NoConvergence {
                    iterations: it + 1,
                    residual: last,
                });
            }
        }
        let res = self.residual(tau, eps, &v, omega).amax();
        if res <= 1e3 * opts.tol {
            return Ok((v, omega, res, last, opts.max_iter));
        }
        Err(Error::NoConvergence {
            iterations: opts.max_iter,
            residual: last,
        })
    }
}

fn build_orbit(tau: f64, eps: f64, omega0: f64, v: &DVector<f64>, omega: f64, res: f64, last: f64, its: usize) -> PeriodicOrbit {
    let series = TrigSeries::from_nodes(omega, v.as_slice());
    let mesh: Vec<[f64; 3]> = (0..=MESH_POINTS)
        .map(|i| {
            let t = omega * i as f64 / MESH_POINTS as f64;
            [t, series.eval(t), series.derivative_at(t, 1)]
        })
        .collect();
    let (lo, hi) = mesh.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m[1]), hi.max(m[1])));
    PeriodicOrbit {
        tau,
        eps,
        period: omega,
        gamma: omega / omega0 - 1.0,
        nodes: v.as_slice().to_vec(),
        mesh,
        amplitude: 0.5 * (hi - lo),
        hopf_amplitude: hopf_amplitude(tau),
        residual: res,
        last_correction: last,
        newton_iterations: its,
        multipliers: Vec::new(),
        floquet_mesh: None,
        unstable_mode: None,
        adjoint: None,
        adjoint_mismatch: None,
    }
}

/// Slowly oscillating periodic orbit around 0, seeded at `ε = 0` by the
/// leading-order Hopf orbit `A cos t` and continued in `ε` with the period
/// as an unknown.
pub fn find_periodic(tau: f64, eps: f64, opts: &PeriodicOptions) -> Result<PeriodicOrbit> {
    if !(tau > HOPF_TAU) || !tau.is_finite() {
        return Err(Error::NoOrbit(format!(
            "tau = {tau} does not exceed 3π/2, where the zero state is stable"
        )));
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("eps must be nonnegative, got {eps}")));
    }
    if opts.nodes < 9 || opts.nodes % 2 == 0 {
        return Err(Error::Domain(format!("collocation needs an odd node count >= 9, got {}", opts.nodes)));
    }
    let col = Collocation::new(opts.nodes);
    let amp = hopf_amplitude(tau);
    let seed = DVector::from_fn(opts.nodes, |j, _| amp * (2.0 * PI * j as f64 / opts.nodes as f64).cos());
    let (mut v, mut omega, mut res, mut last, mut its) = col.newton(tau, 0.0, seed, 2.0 * PI, opts)?;
    let omega0 = omega;
    let mut e = 0.0;
    let mut step = opts.eps_step.min(eps);
    while e < eps {
        let next = (e + step).min(eps);
        match col.newton(tau, next, v.clone(), omega, opts) {
            Ok(r) => {
                (v, omega, res, last, its) = r;
                e = next;
                step = (step * 1.5).min(opts.eps_step);
            }
            Err(_) if step > 1e-6 => step *= 0.5,
            Err(err) => return Err(err),
        }
    }
    let orbit = build_orbit(tau, eps, omega0, &v, omega, res, last, its);
    if orbit.amplitude < MIN_AMPLITUDE {
        return Err(Error::NoOrbit("collocation collapsed onto the zero equilibrium".into()));
    }
    Ok(orbit)
}

fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<C64> {
    let mut ev: Vec<C64> = m.clone().complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    ev
}

/// Eigenvector of `m` for the real eigenvalue `mu` by inverse iteration.
fn eigenvector(m: &DMatrix<f64>, mu: f64) -> Result<DVector<f64>> {
    let n = m.nrows();
    let shift = mu + 1e-9 * mu.abs().max(1.0);
    let lu = (m - DMatrix::identity(n, n) * shift).lu();
    let mut x = DVector::from_element(n, 1.0);
    for _ in 0..4 {
        x = lu
            .solve(&x)
            .ok_or_else(|| Error::Numeric("inverse iteration hit a singular matrix".into()))?;
        let s = x.amax();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Numeric("inverse iteration produced a degenerate vector".into()));
        }
        x /= s;
    }
    Ok(x)
}

/// Floquet multipliers of `εz″ + z′ = −p(t − τ)z + (1 − p(t))z(t − τ)` from
/// the period map on `n_disc` history intervals; stores them, sorted by
/// decreasing modulus, together with the unstable eigenfunction.
pub fn floquet(orbit: &mut PeriodicOrbit, n_disc: usize) -> Result<Vec<Multiplier>> {
    if n_disc < 100 {
        return Err(Error::Domain(format!("n_disc must be at least 100, got {n_disc}")));
    }
    let series = orbit.series();
    let tau = orbit.tau;
    let m = linear::monodromy(
        tau,
        orbit.eps,
        |t| -series.eval(t - tau),
        |t| 1.0 - series.eval(t),
        orbit.period,
        n_disc,
    )?;
    let ev = sorted_eigenvalues(&m);
    if ev.is_empty() || ev.iter().any(|z| !z.re.is_finite()) {
        return Err(Error::Numeric("eigenvalue computation failed".into()));
    }
    let mults: Vec<Multiplier> = ev.iter().copied().map(Multiplier::new).collect();
    orbit.unstable_mode = None;
    if ev[0].norm() > 1.0 + 1e-3 && ev[0].im.abs() < 1e-9 * ev[0].norm() {
        let x = eigenvector(&m, ev[0].re)?;
        let (history, derivative) = if orbit.eps > 0.0 {
            (x.as_slice()[..=n_disc].to_vec(), x[n_disc + 1])
        } else {
            (x.as_slice().to_vec(), 0.0)
        };
        orbit.unstable_mode = Some(UnstableMode {
            multiplier: ev[0].re,
            history,
            derivative,
        });
    }
    orbit.multipliers = mults.clone();
    orbit.floquet_mesh = Some(n_disc);
    Ok(mults)
}

/// Periodic solution `p*` of the formal adjoint
/// `εv″ − v′ + p(t − τ)v − (1 − p(t + τ))v(t + τ) = 0`, normalized by `∫₀^ω p′p* = 1`.
///
/// Under `s = −t` the adjoint is retarded, so `p*` is the eigenfunction at
/// multiplier 1 of that equation's period map, integrated over one period.
pub fn adjoint_periodic(orbit: &mut PeriodicOrbit) -> Result<Vec<[f64; 2]>> {
    let n_disc = orbit
        .floquet_mesh
        .ok_or_else(|| Error::Domain("the adjoint needs the Floquet spectrum; run floquet first".into()))?;
    let series = orbit.series();
    let (tau, eps, omega) = (orbit.tau, orbit.eps, orbit.period);
    let a = |s: f64| -series.eval(-s - tau);
    let b = |s: f64| 1.0 - series.eval(tau - s);
    let m = linear::monodromy(tau, eps, a, b, omega, n_disc)?;
    let ev = sorted_eigenvalues(&m);
    let near: Vec<&C64> = ev.iter().filter(|z| (*z - 1.0).norm() < HYPERBOLICITY_TOL).collect();
    if near.len() != 1 {
        return Err(Error::Hyperbolicity(format!(
            "{} adjoint multipliers within {HYPERBOLICITY_TOL} of 1",
            near.len()
        )));
    }
    let x = eigenvector(&m, near[0].re)?;
    let grid = FineGrid::new(tau, eps, n_disc, omega);
    let coef = Coefficients::sample(a, b, grid.dt, grid.steps);
    let hist = linear::refine(&grid, &x.as_slice()[..=n_disc]);
    let w0 = if eps > 0.0 { x[n_disc + 1] } else { 0.0 };
    let (u, _) = linear::solve(&grid, &coef, &hist, w0);
    let ustar = |t: f64| cubic_at(&u, -tau, grid.dt, omega - t);
    let h = omega / MESH_POINTS as f64;
    let norm: f64 = (0..MESH_POINTS)
        .map(|i| {
            let t = i as f64 * h;
            series.derivative_at(t, 1) * ustar(t) * h
        })
        .sum();
    if !(norm.abs() > 1e-12) {
        return Err(Error::Hyperbolicity("adjoint solution is orthogonal to p′".into()));
    }
    let mesh: Vec<[f64; 2]> = (0..=MESH_POINTS)
        .map(|i| {
            let t = i as f64 * h;
            [t, ustar(t) / norm]
        })
        .collect();
    orbit.adjoint_mismatch = Some((mesh[0][1] - mesh[MESH_POINTS][1]).abs());
    orbit.adjoint = Some(mesh.clone());
    Ok(mesh)
}

/// `⟨g, p*⟩ = ∫₀^ω g p*`; zero is the solvability condition for periodic forcing `g`.
pub fn solvability<G: Fn(f64) -> f64>(orbit: &PeriodicOrbit, g: G) -> Result<f64> {
    let mesh = orbit
        .adjoint
        .as_ref()
        .ok_or_else(|| Error::Domain("no adjoint solution on this orbit".into()))?;
    let h = orbit.period / (mesh.len() - 1) as f64;
    Ok(mesh[..mesh.len() - 1].iter().map(|m| g(m[0]) * m[1] * h).sum())
}

/// Sign changes of `p′` over one period.
pub fn critical_points(orbit: &PeriodicOrbit) -> usize {
    let s = orbit.series();
    let n = 4 * MESH_POINTS;
    let d: Vec<f64> = (0..n).map(|i| s.derivative_at(orbit.period * i as f64 / n as f64, 1)).collect();
    (0..n).filter(|&i| d[i] * d[(i + 1) % n] < 0.0).count()
}

/// Sign changes of `s ↦ p(t + s)` on `[−τ, 0]`.
pub fn delay_window_sign_changes(orbit: &PeriodicOrbit, t: f64) -> usize {
    let s = orbit.series();
    let n = 400;
    let v: Vec<f64> = (0..=n).map(|i| s.eval(t - orbit.tau + orbit.tau * i as f64 / n as f64)).collect();
    v.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trig_series_interpolates_and_differentiates() {
        let omega = 5.0;
        let th = 2.0 * PI / omega;
        let f = |t: f64| 0.2 + (th * t).cos() - 0.3 * (2.0 * th * t).sin();
        let v: Vec<f64> = (0..9).map(|j| f(omega * j as f64 / 9.0)).collect();
        let s = TrigSeries::from_nodes(omega, &v);
        for &t in &[0.1, 1.7, 4.2] {
            assert!((s.eval(t) - f(t)).abs() < 1e-12);
            let d = -th * (th * t).sin() - 0.6 * th * (2.0 * th * t).cos();
            assert!((s.derivative_at(t, 1) - d).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_matrix_moves_trig_polynomials() {
        let col = Collocation::new(11);
        let f = |s: f64| (2.0 * PI * s).sin() + 0.5 * (4.0 * PI * s).cos();
        let v = DVector::from_fn(11, |j, _| f(j as f64 / 11.0));
        let (s, _) = col.shift(0.3);
        let sv = s * &v;
        let dv = &col.d1 * &v;
        for j in 0..11 {
            let x = j as f64 / 11.0;
            assert!((sv[j] - f(x - 0.3)).abs() < 1e-12);
            let d = 2.0 * PI * (2.0 * PI * x).cos() - 2.0 * PI * (4.0 * PI * x).sin();
            assert!((dv[j] - d).abs() < 1e-10);
        }
    }

    #[test]
    fn no_orbit_below_hopf_point() {
        assert!(matches!(find_periodic(4.0, 0.0, &PeriodicOptions::default()), Err(Error::NoOrbit(_))));
        assert!(matches!(find_periodic(HOPF_TAU, 0.0, &PeriodicOptions::default()), Err(Error::NoOrbit(_))));
    }

    #[test]
    fn orbit_solves_the_equation_between_nodes() {
        let o = find_periodic(HOPF_TAU + 0.1, 0.0, &PeriodicOptions::default()).unwrap();
        let s = o.series();
        for i in 0..97 {
            let t = o.period * (i as f64 + 0.37) / 97.0;
            let r = s.derivative_at(t, 1) - s.eval(t - o.tau) * (1.0 - s.eval(t));
            assert!(r.abs() < 1e-10, "residual {r} at {t}");
        }
        assert!(o.mesh.iter().all(|m| m[1] < 1.0));
        assert_eq!(critical_points(&o), 2);
    }

    #[test]
    fn orbit_is_slowly_oscillating() {
        let o = find_periodic(HOPF_TAU + 0.1, 0.0, &PeriodicOptions::default()).unwrap();
        for i in 0..50 {
            let n = delay_window_sign_changes(&o, o.period * i as f64 / 50.0);
            assert!(n == 1 || n == 2, "{n} sign changes");
        }
    }

    #[test]
    fn eps_continuation_keeps_the_residual_small() {
        let o = find_periodic(HOPF_TAU + 0.1, 5e-3, &PeriodicOptions::default()).unwrap();
        let s = o.series();
        for i in 0..50 {
            let t = o.period * (i as f64 + 0.5) / 50.0;
            let r = 5e-3 * s.derivative_at(t, 2) + s.derivative_at(t, 1) - s.eval(t - o.tau) * (1.0 - s.eval(t));
            assert!(r.abs() < 1e-9);
        }
        assert!(o.gamma.abs() < 0.05);
    }
}
