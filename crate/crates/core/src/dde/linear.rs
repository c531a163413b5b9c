//! Linear periodic delay equations `εz″ + z′ = a(t)z + b(t)z(t − τ)` and
//! their period maps on a history mesh.

use nalgebra::DMatrix;

use super::wright::steps_per_delay;
use super::{cubic_at, mid_value_in_segment};
use crate::error::{Error, Result};

/// Coefficients sampled at whole and half steps of a fine grid starting at `t = 0`.
pub(crate) struct Coefficients {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Coefficients {
    pub(crate) fn sample<A, B>(a: A, b: B, dt: f64, steps: usize) -> Self
    where
        A: Fn(f64) -> f64,
        B: Fn(f64) -> f64,
    {
        let n = 2 * steps + 1;
        Self {
            a: (0..n).map(|k| a(0.5 * k as f64 * dt)).collect(),
            b: (0..n).map(|k| b(0.5 * k as f64 * dt)).collect(),
        }
    }
}

/// Fine-grid geometry for a history mesh of `n` intervals.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FineGrid {
    pub tau: f64,
    pub eps: f64,
    /// Fine steps per delay.
    pub m: usize,
    pub dt: f64,
    pub steps: usize,
}

impl FineGrid {
    pub(crate) fn new(tau: f64, eps: f64, n: usize, horizon: f64) -> Self {
        let sub = steps_per_delay(tau, eps).div_ceil(n).max(1);
        let m = n * sub;
        let dt = tau / m as f64;
        Self {
            tau,
            eps,
            m,
            dt,
            steps: (horizon / dt).ceil() as usize + 2,
        }
    }
}

/// RK4 solution on the fine grid from a fine history `z[0..=m]` and `z′(0) = w0`.
/// Returns `(z, z′)` at all nodes from `−τ` to `steps·dt`.
pub(crate) fn solve(grid: &FineGrid, coef: &Coefficients, history: &[f64], w0: f64) -> (Vec<f64>, Vec<f64>) {
    let (m, dt, eps) = (grid.m, grid.dt, grid.eps);
    let mut z = Vec::with_capacity(m + 1 + grid.steps);
    z.extend_from_slice(history);
    let mut dz = vec![0.0; m + 1];
    let mut w = w0;
    dz[m] = if eps == 0.0 { coef.a[0] * z[m] + coef.b[0] * z[0] } else { w };
    for step in 0..grid.steps {
        let i = m + step;
        let k = i - m;
        let (d0, dh, d1) = (z[k], mid_value_in_segment(&z, k, m), z[k + 1]);
        let (a0, ah, a1) = (coef.a[2 * step], coef.a[2 * step + 1], coef.a[2 * step + 2]);
        let (b0, bh, b1) = (coef.b[2 * step], coef.b[2 * step + 1], coef.b[2 * step + 2]);
        let zi = z[i];
        if eps == 0.0 {
            let k1 = a0 * zi + b0 * d0;
            let k2 = ah * (zi + 0.5 * dt * k1) + bh * dh;
            let k3 = ah * (zi + 0.5 * dt * k2) + bh * dh;
            let k4 = a1 * (zi + dt * k3) + b1 * d1;
            let zn = zi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            z.push(zn);
            dz.push(a1 * zn + b1 * d1);
        } else {
            let f = |a: f64, b: f64, d: f64, v: f64, wv: f64| (wv, (-wv + a * v + b * d) / eps);
            let (p1, q1) = f(a0, b0, d0, zi, w);
            let (p2, q2) = f(ah, bh, dh, zi + 0.5 * dt * p1, w + 0.5 * dt * q1);
            let (p3, q3) = f(ah, bh, dh, zi + 0.5 * dt * p2, w + 0.5 * dt * q2);
            let (p4, q4) = f(a1, b1, d1, zi + dt * p3, w + dt * q3);
            z.push(zi + dt / 6.0 * (p1 + 2.0 * p2 + 2.0 * p3 + p4));
            w += dt / 6.0 * (q1 + 2.0 * q2 + 2.0 * q3 + q4);
            dz.push(w);
        }
    }
    (z, dz)
}

/// Fine history obtained by cubic interpolation of `n + 1` coarse values on `[−τ, 0]`.
pub(crate) fn refine(grid: &FineGrid, coarse: &[f64]) -> Vec<f64> {
    let n = coarse.len() - 1;
    let h = grid.tau / n as f64;
    (0..=grid.m).map(|i| cubic_at(coarse, 0.0, h, i as f64 * grid.dt)).collect()
}

/// Coarse segment `[T − τ, T]` read off a fine solution.
pub(crate) fn segment(grid: &FineGrid, z: &[f64], n: usize, end: f64) -> Vec<f64> {
    let h = grid.tau / n as f64;
    (0..=n)
        .map(|j| cubic_at(z, -grid.tau, grid.dt, end - grid.tau + j as f64 * h))
        .collect()
}

/// Period map of `εz″ + z′ = a(t)z + b(t)z(t − τ)` over `[0, period]` on a
/// history mesh of `n_disc` intervals. The state is the history on `[−τ, 0]`,
/// followed by `z′(0)` when `ε > 0`.
pub fn monodromy<A, B>(tau: f64, eps: f64, a: A, b: B, period: f64, n_disc: usize) -> Result<DMatrix<f64>>
where
    A: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    if n_disc < 4 {
        return Err(Error::Domain(format!("history mesh needs at least 4 intervals, got {n_disc}")));
    }
    if !(period > 0.0) || !(tau > 0.0) || !(eps >= 0.0) {
        return Err(Error::Domain(format!("invalid (tau, eps, period) = ({tau}, {eps}, {period})")));
    }
    let grid = FineGrid::new(tau, eps, n_disc, period);
    let coef = Coefficients::sample(a, b, grid.dt, grid.steps);
    let extra = usize::from(eps > 0.0);
    let dim = n_disc + 1 + extra;
    let mut out = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut coarse = vec![0.0; n_disc + 1];
        let mut w0 = 0.0;
        if col <= n_disc {
            coarse[col] = 1.0;
        } else {
            w0 = 1.0;
        }
        let hist = refine(&grid, &coarse);
        let (z, dz) = solve(&grid, &coef, &hist, if eps > 0.0 { w0 } else { 0.0 });
        for (j, v) in segment(&grid, &z, n_disc, period).into_iter().enumerate() {
            out[(j, col)] = v;
        }
        if extra == 1 {
            out[(dim - 1, col)] = cubic_at(&dz, -tau, grid.dt, period);
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("period map has non-finite entries".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_coefficients_match_characteristic_root() {
        // z′ = −z(t − τ)·(π/2)/τ... use z′ = a z with b = 0: the map is e^{aT} on every node.
        let m = monodromy(1.0, 0.0, |_| -0.3, |_| 0.0, 2.0, 20).unwrap();
        for j in 0..=20 {
            let expect = (-0.3f64 * (2.0 - 1.0 + j as f64 / 20.0)).exp();
            let row_sum: f64 = m.row(j).iter().sum();
            assert!((row_sum - expect).abs() < 1e-8, "{row_sum} vs {expect}");
        }
    }

    #[test]
    fn pure_delay_has_exponential_mode() {
        // z′ = z(t − τ) has the mode e^{z₁t} with z₁ = e^{−z₁τ}; the period map
        // sends its history to itself times e^{z₁T}.
        let tau = 1.0;
        let z1 = crate::spectral::leading_real_root(tau, 0.0).unwrap();
        let n = 100;
        let t = 3.0;
        let m = monodromy(tau, 0.0, |_| 0.0, |_| 1.0, t, n).unwrap();
        let h: Vec<f64> = (0..=n).map(|j| (z1 * (-tau + j as f64 * tau / n as f64)).exp()).collect();
        let v = &m * nalgebra::DVector::from_vec(h.clone());
        for j in 0..=n {
            assert!((v[j] - h[j] * (z1 * t).exp()).abs() < 1e-7 * v[j].abs());
        }
    }
}
