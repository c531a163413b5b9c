//! Closed-form fronts of the delayed toy model
//! `φ'' − cφ' = −φ` while `φ < 1/2`, `φ'' − cφ' = −(1 − φ(t − cτ))` once `φ ≥ 1/2`,
//! at `c = 2.5`, `cτ = 2 ln 1.5`.
//!
//! Each front is `0.5e^{κt}` for `t ≤ 0` and a combination of steady-state modes
//! at 1 for `t > 0`. The junction constants come from `C¹` matching at `t = 0`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::profiles::profile::{Profile, RightTail};
use crate::spectral::toy_steady_roots;

pub const TOY_C: f64 = 2.5;

pub fn toy_c_tau() -> f64 {
    2.0 * 1.5f64.ln()
}

/// Values printed alongside the derived constants for comparison.
pub const PRINTED_A_HAT: f64 = 0.546;
pub const PRINTED_Z0: f64 = 2.727;

/// One closed-form toy front.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ToyFront {
    /// `0.5e^{0.5t}`, then `1 − 0.5e^{−0.5t}`.
    Slow,
    /// `0.5e^{2t}`, then `1 − a e^{−0.5t} − b e^{z₄t}`.
    Fast { a: f64, b: f64, z4: f64 },
    /// `0.5e^{2t}`, then `1 + â e^{x₀t} cos(y₀t + z₀)`.
    Oscillating { a_hat: f64, x0: f64, y0: f64, z0: f64 },
}

impl ToyFront {
    fn left_rate(&self) -> f64 {
        match self {
            ToyFront::Slow => 0.5,
            _ => 2.0,
        }
    }

    /// `(φ, φ', φ'')` using the left piece for `t ≤ 0` and the right piece for `t > 0`.
    pub fn jet(&self, t: f64) -> (f64, f64, f64) {
        if t <= 0.0 {
            self.left_jet(t)
        } else {
            self.right_jet(t)
        }
    }

    fn left_jet(&self, t: f64) -> (f64, f64, f64) {
        let k = self.left_rate();
        let e = 0.5 * (k * t).exp();
        (e, k * e, k * k * e)
    }

    fn right_jet(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            ToyFront::Slow => {
                let e = 0.5 * (-0.5 * t).exp();
                (1.0 - e, 0.5 * e, -0.25 * e)
            }
            ToyFront::Fast { a, b, z4 } => {
                let e1 = a * (-0.5 * t).exp();
                let e2 = b * (z4 * t).exp();
                (1.0 - e1 - e2, 0.5 * e1 - z4 * e2, -0.25 * e1 - z4 * z4 * e2)
            }
            ToyFront::Oscillating { a_hat, x0, y0, z0 } => {
                let z = C64::new(x0, y0);
                let w = a_hat * C64::new(0.0, z0).exp() * (z * t).exp();
                (1.0 + w.re, (z * w).re, (z * z * w).re)
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.jet(t).0
    }

    /// Residual of the branch equation at `t`, with the branch picked by the
    /// piece in use (`φ < 1/2` for `t ≤ 0`, `φ ≥ 1/2` for `t > 0`).
    pub fn residual(&self, t: f64) -> f64 {
        let (v, d1, d2) = self.jet(t);
        let forcing = if t <= 0.0 {
            v
        } else {
            1.0 - self.value(t - toy_c_tau())
        };
        d2 - TOY_C * d1 + forcing
    }

    /// Right-limit residual at `t ≥ 0` (the right piece evaluated at `t`).
    pub fn right_residual(&self, t: f64) -> f64 {
        let (_, d1, d2) = self.right_jet(t);
        d2 - TOY_C * d1 + 1.0 - self.value(t - toy_c_tau())
    }

    /// `(|φ(0⁻) − φ(0⁺)|, |φ'(0⁻) − φ'(0⁺)|)`.
    pub fn junction_mismatch(&self) -> (f64, f64) {
        let l = self.left_jet(0.0);
        let r = self.right_jet(0.0);
        ((l.0 - r.0).abs(), (l.1 - r.1).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConstants {
    pub c: f64,
    pub c_tau: f64,
    pub root_half: f64,
    pub z4: f64,
    pub x0: f64,
    pub y0: f64,
    pub a: f64,
    pub b: f64,
    pub a_hat: f64,
    pub z0: f64,
    pub a_hat_printed: f64,
    pub z0_printed: f64,
    /// `C⁰` and `C¹` junction mismatches of the three fronts.
    pub junction: [(f64, f64); 3],
    /// Sup residual on `t ≤ 0` and `t > cτ`.
    pub residual_outside: [f64; 3],
    /// Sup residual on the window `(0, cτ]`, including the limit `t → 0⁺`.
    pub residual_window: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyFronts {
    pub fronts: [ToyFront; 3],
    pub profiles: [Profile; 3],
    pub constants: ToyConstants,
}

/// Sup of the φ₁ window residual in closed form: `−0.75e^{−t/2} + 1 − 0.5e^{(t−cτ)/2}`
/// increases from `−1/12` at `0⁺` to `0` at `cτ`.
pub const SLOW_WINDOW_RESIDUAL: f64 = 1.0 / 12.0;

const RESIDUAL_SPAN: f64 = 12.0;
const RESIDUAL_STEP: f64 = 1e-3;

/// Build the three toy fronts with derived constants and residual diagnostics.
pub fn toy_fronts() -> Result<ToyFronts> {
    let ct = toy_c_tau();
    let half = toy_steady_roots(TOY_C, ct, C64::new(-0.5, 0.0))?;
    let z4 = toy_steady_roots(TOY_C, ct, C64::new(-4.0, 0.0))?.re;
    let zc = toy_steady_roots(TOY_C, ct, C64::new(-6.0, 10.0))?;
    let (x0, y0) = (zc.re, zc.im.abs());

    // a + b = 1/2, a/2 − z₄ b = 1.
    let b = 0.75 / (-z4 - 0.5);
    let a = 0.5 - b;

    // â cos z₀ = −1/2, â (x₀ cos z₀ − y₀ sin z₀) = 1.
    let sin_part = -(1.0 + 0.5 * x0) / y0;
    let a_hat = (0.25 + sin_part * sin_part).sqrt();
    let z0 = (sin_part / a_hat).atan2(-0.5 / a_hat);

    let fronts = [
        ToyFront::Slow,
        ToyFront::Fast { a, b, z4 },
        ToyFront::Oscillating { a_hat, x0, y0, z0 },
    ];
    let mut junction = [(0.0, 0.0); 3];
    let mut residual_outside = [0.0; 3];
    let mut residual_window = [0.0; 3];
    let steps = (RESIDUAL_SPAN / RESIDUAL_STEP) as i64;
    for (j, f) in fronts.iter().enumerate() {
        junction[j] = f.junction_mismatch();
        for i in -steps..=steps {
            let t = i as f64 * RESIDUAL_STEP;
            if t <= 0.0 || t > ct {
                residual_outside[j] = f64::max(residual_outside[j], f.residual(t).abs());
            }
        }
        let nw = 10_000;
        for i in 0..=nw {
            let t = ct * i as f64 / nw as f64;
            residual_window[j] = f64::max(residual_window[j], f.right_residual(t).abs());
        }
    }
    let dt = 0.01;
    let n = (2.0 * RESIDUAL_SPAN / dt).round() as usize + 1;
    let build = |f: ToyFront| Profile::from_fn(-RESIDUAL_SPAN, dt, n, |t| f.value(t), 0.0, RightTail::Constant(1.0));
    let profiles = [build(fronts[0])?, build(fronts[1])?, build(fronts[2])?];
    Ok(ToyFronts {
        fronts,
        profiles,
        constants: ToyConstants {
            c: TOY_C,
            c_tau: ct,
            root_half: half.re,
            z4,
            x0,
            y0,
            a,
            b,
            a_hat,
            z0,
            a_hat_printed: PRINTED_A_HAT,
            z0_printed: PRINTED_Z0,
            junction,
            residual_outside,
            residual_window,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn junctions_are_c1() {
        let t = toy_fronts().unwrap();
        for (c0, c1) in t.constants.junction {
            assert!(c0 <= 1e-9 && c1 <= 1e-9);
        }
    }

    #[test]
    fn slow_front_window_matches_closed_form() {
        let t = toy_fronts().unwrap();
        assert!((t.constants.residual_window[0] - SLOW_WINDOW_RESIDUAL).abs() < 1e-9);
        let f = ToyFront::Slow;
        assert!((f.right_residual(0.0) + SLOW_WINDOW_RESIDUAL).abs() < 1e-12);
        assert!(f.right_residual(toy_c_tau()).abs() < 1e-12);
    }

    #[test]
    fn left_piece_solves_lower_branch() {
        for f in toy_fronts().unwrap().fronts {
            for i in 0..100 {
                assert!(f.residual(-0.1 * i as f64).abs() < 1e-12);
            }
        }
    }
}
