//! Delay-equation numerics for `εy″ + y′ = y(t − τ)(1 − y)` with `ε = c⁻²`:
//! method-of-steps integration, periodic orbits with their Floquet spectra and
//! adjoints, and connections between the equilibria and the periodic orbit.

pub mod connection;
pub mod linear;
pub mod periodic;
pub mod wright;

pub use connection::{
    default_ladder, heteroclinic, tail_stats, to_wavefront, ConnectionKind, ConnectionOptions, ConnectionRun,
    ConnectionSolution, TailStats,
};
pub use linear::monodromy;
pub use periodic::{
    adjoint_periodic, critical_points, delay_window_sign_changes, find_periodic, floquet, hopf_amplitude, solvability,
    Multiplier, PeriodicOptions, PeriodicOrbit, TrigSeries, UnstableMode,
};
pub use wright::{integrate_until, integrate_wright, steps_per_delay, Trajectory};

/// Value at the midpoint of `[k, k+1]` of the cubic through four nodes,
/// with the stencil kept inside the delay segment `[jm, (j+1)m]` that contains `[k, k+1]`; derivative jumps at
/// the segment ends are then never interpolated across.
pub(crate) fn mid_value_in_segment(v: &[f64], k: usize, m: usize) -> f64 {
    let s0 = (k / m) * m;
    let hi = (s0 + m).min(v.len() - 1).saturating_sub(3).max(s0.min(v.len() - 4));
    let j0 = k.saturating_sub(1).clamp(s0.min(hi), hi);
    let w = cubic_weights(k as f64 + 0.5 - (j0 + 1) as f64);
    w[0] * v[j0] + w[1] * v[j0 + 1] + w[2] * v[j0 + 2] + w[3] * v[j0 + 3]
}

/// Four-point Lagrange weights for the node offset `x ∈ [0, 1]` measured from
/// the second of four equally spaced nodes.
pub(crate) fn cubic_weights(x: f64) -> [f64; 4] {
    [
        -x * (x - 1.0) * (x - 2.0) / 6.0,
        (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
        -(x + 1.0) * x * (x - 2.0) / 2.0,
        (x + 1.0) * x * (x - 1.0) / 6.0,
    ]
}

/// Cubic interpolation of nodes `v[i]` at `t0 + i·dt`, clamped to the grid.
pub(crate) fn cubic_at(v: &[f64], t0: f64, dt: f64, t: f64) -> f64 {
    let n = v.len();
    let x = ((t - t0) / dt).clamp(0.0, (n - 1) as f64);
    let k = (x.floor() as usize).clamp(1, n.saturating_sub(3).max(1));
    let w = cubic_weights(x - k as f64);
    w[0] * v[k - 1] + w[1] * v[k] + w[2] * v[k + 1] + w[3] * v[k + 2]
}

/// Least-squares slope of `ln|v|` against `t` over the samples with `|v|` in `[lo, hi]`.
pub(crate) fn log_slope(t: &[f64], v: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(v)
        .filter(|(_, v)| v.abs() >= lo && v.abs() <= hi)
        .map(|(t, v)| (*t, v.abs().ln()))
        .collect();
    if pts.len() < 10 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mt) * (p.1 - my), a.1 + (p.0 - mt).powi(2)));
    (sxx > 0.0).then(|| sxy / sxx)
}
