//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Ω with Ωe^Ω = 1 by Newton on `z e^z − 1`.
pub fn omega() -> f64 {
    let mut z: f64 = 0.5;
    for _ in 0..50 {
        z -= (z * z.exp() - 1.0) / ((1.0 + z) * z.exp());
    }
    z
}

/// The local front of `φ'' − cφ' + φ(1 − φ) = 0`, shot backward from the
/// stable direction of 1 with RK4; returns `(t, φ)` with `φ(0) = 1/2`.
pub fn shooting_front(c: f64) -> Vec<(f64, f64)> {
    let nu = 0.5 * (c - (c * c + 4.0).sqrt());
    let d = 1e-9;
    let h = -1e-3;
    let f = |y: [f64; 2]| [y[1], c * y[1] - y[0] * (1.0 - y[0])];
    let mut y = [1.0 - d, -d * nu];
    let mut t = 0.0;
    let mut out = vec![(t, y[0])];
    while y[0] > 1e-12 && t > -200.0 {
        let k1 = f(y);
        let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
        out.push((t, y[0]));
    }
    out.reverse();
    let i = out.iter().position(|p| p.1 >= 0.5).unwrap();
    let (a, b) = (out[i - 1], out[i]);
    let t_half = a.0 + (0.5 - a.1) * (b.0 - a.0) / (b.1 - a.1);
    out.into_iter().map(|(t, v)| (t - t_half, v)).collect()
}

/// Leading-order Hopf amplitude `√(20δ/(9π/2 + 1))` at `τ = 3π/2 + δ`.
pub fn hopf_formula(delta: f64) -> f64 {
    (20.0 * delta / (4.5 * PI + 1.0)).sqrt()
}

/// Positive root of `εz² + z − e^{−zτ}` by bisection on `(0, 1)`.
pub fn leading_root(tau: f64, eps: f64) -> f64 {
    let f = |z: f64| eps * z * z + z - (-z * tau).exp();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if f(m) > 0.0 {
            hi = m;
        } else {
            lo = m;
        }
    }
    0.5 * (lo + hi)
}

