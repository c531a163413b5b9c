//! A priori bounds for semi-wavefronts, the three convergence conditions, and
//! the feasibility geometry of the oscillation extremes `(p, P)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Kernel, Side};
use crate::spectral::{fang_zhao_negative_root, quad_roots};

/// `f(s) = 2s / (c + √(c² + 4s))`, the nonnegative-branch root of `y² + cy = s`.
pub fn f_func(c: f64, s: f64) -> Result<f64> {
    if s < -1.0 {
        return Err(Error::Domain(format!("f is defined for s >= -1, got {s}")));
    }
    if !(c >= 2.0) {
        return Err(Error::Domain(format!("f needs c >= 2, got {c}")));
    }
    Ok(2.0 * s / (c + (c * c + 4.0 * s).max(0.0).sqrt()))
}

/// `ρ(u) = f(e^{−u} − 1)`.
pub fn rho(c: f64, u: f64) -> Result<f64> {
    f_func(c, (-u).exp() - 1.0)
}

pub const RIGHT_MASS_THRESHOLD: f64 = 1e-3;
const R_SEARCH_CAP: f64 = 1e6;
const SIGMA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UBound {
    pub value: f64,
    /// `max(1, 1/∫_{s≥0} e^{s f(−1)} K)`, when the kernel has mass on `s ≥ 0`.
    pub u1: Option<f64>,
    /// `2e^{λ(r+σ)}`, when the right mass is below 1e−3.
    pub u2: Option<f64>,
    pub r: Option<f64>,
    pub sigma: Option<f64>,
}

/// Smallest `σ` with `2c(e^{λσ} − 1)/(e^{cσ} − 1) < 0.01`; the ratio decreases in `σ`.
pub fn sigma_threshold(c: f64, lam: f64) -> f64 {
    let ratio = |s: f64| 2.0 * c * (lam * s).exp_m1() / (c * s).exp_m1();
    if 2.0 * lam < 0.01 {
        return 0.0;
    }
    let mut hi = 1.0;
    while ratio(hi) >= 0.01 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > SIGMA_TOL {
        let m = 0.5 * (lo + hi);
        if ratio(m) < 0.01 {
            hi = m;
        } else {
            lo = m;
        }
    }
    hi
}

/// Upper bound `U(c, K)` for all semi-wavefronts at speed `c`.
pub fn u_bound(c: f64, k: &Kernel) -> Result<UBound> {
    let (lam, _) = quad_roots(c)?;
    let right = k.mass(Side::Right);
    let u1 = if right > 0.0 {
        let f_m1 = f_func(c, -1.0)?;
        Some((1.0 / k.exp_moment(f_m1, Side::Right)).max(1.0))
    } else {
        None
    };
    let (u2, r, sigma) = if right < RIGHT_MASS_THRESHOLD {
        let (lo, _) = k.support();
        let r_max = (-lo).max(0.0).ceil() + 1.0;
        if r_max > R_SEARCH_CAP {
            return Err(Error::InvalidKernel(format!(
                "kernel support reaches s = {lo}, beyond the r search cap {R_SEARCH_CAP}"
            )));
        }
        let mut r = 0.0;
        while k.mass_between(-r, 0.0) <= 0.99 {
            r += 1.0;
            if r > r_max {
                return Err(Error::InvalidKernel("no r with mass on [-r, 0] above 0.99".into()));
            }
        }
        let sigma = sigma_threshold(c, lam);
        (Some(2.0 * (lam * (r + sigma)).exp()), Some(r), Some(sigma))
    } else {
        (None, None, None)
    };
    let value = match (u1, u2) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => unreachable!("one of the two bounds always applies"),
    };
    Ok(UBound {
        value: value.max(1.0),
        u1,
        u2,
        r,
        sigma,
    })
}

/// Upper limit on `M*` in the third convergence condition.
pub fn estm_bound(alpha_plus: f64, alpha_minus: f64) -> Result<f64> {
    let s = alpha_plus + alpha_minus;
    if !(alpha_plus > 0.0) || !(alpha_minus >= 0.0) || !(s < 0.5) {
        return Err(Error::Domain(format!(
            "the bound is well defined when alpha_plus > 0 and alpha_plus + alpha_minus < 1/2, got ({alpha_plus}, {alpha_minus})"
        )));
    }
    let a = 1.0 + alpha_plus - alpha_minus;
    let disc = (a * a - 4.0 * alpha_plus).max(0.0);
    Ok((a + disc.sqrt()) / (2.0 * alpha_plus))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convergence {
    GuaranteedCase1,
    GuaranteedCase2,
    GuaranteedCase3,
    NotGuaranteed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    pub verdict: Convergence,
    pub m_star: f64,
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    /// `M*(α₊ + α₋)`, compared against 1.
    pub case1_value: f64,
    /// `α₊ + α₋`, compared against 1/2.
    pub alpha_sum: f64,
    pub estm: Option<f64>,
}

/// Decide which of the three sufficient conditions for `φ(+∞) = 1` holds.
///
/// The kernel-structure condition (no mass on `s < 0`) is tested first because
/// it does not depend on `M*`.
pub fn convergence_from_alphas(alpha_plus: f64, alpha_minus: f64, m_star: f64) -> ConvergenceVerdict {
    let sum = alpha_plus + alpha_minus;
    let estm = estm_bound(alpha_plus, alpha_minus).ok();
    let verdict = if alpha_plus == 0.0 && sum < 0.5 {
        Convergence::GuaranteedCase2
    } else if m_star * sum < 1.0 {
        Convergence::GuaranteedCase1
    } else if alpha_plus > 0.0 && sum < 0.5 && estm.is_some_and(|e| m_star < e) {
        Convergence::GuaranteedCase3
    } else {
        Convergence::NotGuaranteed
    };
    ConvergenceVerdict {
        verdict,
        m_star,
        alpha_plus,
        alpha_minus,
        case1_value: m_star * sum,
        alpha_sum: sum,
        estm,
    }
}

pub fn convergence_check(c: f64, k: &Kernel, m_star: f64) -> Result<ConvergenceVerdict> {
    Ok(convergence_from_alphas(k.alpha_plus(c)?, k.alpha_minus(c)?, m_star))
}

/// Left-hand side of `p + α₊P(1−p) + α₋P(P−1) ≥ 1`.
pub fn cine_lhs(p: f64, big_p: f64, ap: f64, am: f64) -> f64 {
    p + ap * big_p * (1.0 - p) + am * big_p * (big_p - 1.0)
}

/// Left-hand side of `P − α₊P(P−1) − α₋P(1−p) ≤ 1`.
pub fn cine2_lhs(p: f64, big_p: f64, ap: f64, am: f64) -> f64 {
    big_p - ap * big_p * (big_p - 1.0) - am * big_p * (1.0 - p)
}

/// Slacks of both extremes inequalities; nonnegative means satisfied.
pub fn cine_slacks(p: f64, big_p: f64, ap: f64, am: f64) -> (f64, f64) {
    (cine_lhs(p, big_p, ap, am) - 1.0, 1.0 - cine2_lhs(p, big_p, ap, am))
}

/// The corner `A* = (2 − 1/(α₊+α₋), 1/(α₊+α₋))` where both inequalities are equalities.
pub fn a_star(ap: f64, am: f64) -> Option<(f64, f64)> {
    let s = ap + am;
    (s > 0.0).then(|| (2.0 - 1.0 / s, 1.0 / s))
}

/// The dual test `p > 2 − 1/(α₊+α₋)`; informational only.
pub fn dual_condition(p: f64, ap: f64, am: f64) -> Option<bool> {
    a_star(ap, am).map(|(pa, _)| p > pa)
}

/// Cases of the `(α₊, α₋)` quadrant distinguished by the shape of the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionCase {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "c")]
    C,
    #[serde(rename = "d")]
    D,
    #[serde(rename = "e")]
    E,
}

impl RegionCase {
    pub fn classify(ap: f64, am: f64) -> Option<RegionCase> {
        match (ap > 0.0, am > 0.0) {
            (false, false) => None,
            (false, true) => Some(if am < 0.5 { RegionCase::A } else { RegionCase::B }),
            (true, false) => Some(RegionCase::C),
            (true, true) => Some(if ap + am < 0.5 { RegionCase::D } else { RegionCase::E }),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RegionCase::A => "a",
            RegionCase::B => "b",
            RegionCase::C => "c",
            RegionCase::D => "d",
            RegionCase::E => "e",
        }
    }
}

pub const FEASIBLE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub p_values: Vec<f64>,
    pub big_p_values: Vec<f64>,
    /// Row-major over `(P, p)`: `feasible[j * n + i]` refers to `(p_values[i], big_p_values[j])`.
    pub feasible: Vec<bool>,
    /// `(min p, max P)` over marked points.
    pub extremes: Option<(f64, f64)>,
    pub a_star: Option<(f64, f64)>,
}

impl FeasibleSet {
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, bool)> + '_ {
        let n = self.p_values.len();
        self.feasible
            .iter()
            .enumerate()
            .map(move |(idx, &ok)| (self.p_values[idx % n], self.big_p_values[idx / n], ok))
    }
}

/// Scan `(0, 1] × [1, P_cap]` for points satisfying both extremes inequalities.
pub fn pp_feasible_set(ap: f64, am: f64, p_cap: f64, grid_n: usize) -> Result<FeasibleSet> {
    if !(ap >= 0.0 && am >= 0.0) {
        return Err(Error::Domain(format!("intensities must be nonnegative, got ({ap}, {am})")));
    }
    if !(p_cap >= 1.0) || grid_n < 2 {
        return Err(Error::Domain(format!("need P_cap >= 1 and a grid, got ({p_cap}, {grid_n})")));
    }
    let n = grid_n;
    let p_values: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let big_p_values: Vec<f64> = (0..n)
        .map(|j| 1.0 + (p_cap - 1.0) * j as f64 / (n - 1) as f64)
        .collect();
    let mut feasible = Vec::with_capacity(n * n);
    let mut extremes: Option<(f64, f64)> = None;
    for &bp in &big_p_values {
        for &p in &p_values {
            let (s1, s2) = cine_slacks(p, bp, ap, am);
            let ok = s1 >= -FEASIBLE_SLACK && s2 >= -FEASIBLE_SLACK;
            if ok {
                extremes = Some(match extremes {
                    None => (p, bp),
                    Some((lo, hi)) => (lo.min(p), hi.max(bp)),
                });
            }
            feasible.push(ok);
        }
    }
    Ok(FeasibleSet {
        alpha_plus: ap,
        alpha_minus: am,
        p_values,
        big_p_values,
        feasible,
        extremes,
        a_star: a_star(ap, am),
    })
}

/// `(K ∗ φ₋)(0)` for the capped piecewise-linear test profile built from `(p, P)`.
pub fn theta_improved(p: f64, big_p: f64, c: f64, k: &Kernel) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0 && big_p >= 1.0) {
        return Err(Error::Domain(format!("need 0 < p <= 1 <= P, got ({p}, {big_p})")));
    }
    if !(c >= 2.0) {
        return Err(Error::Domain(format!("need c >= 2, got {c}")));
    }
    let phi = |s: f64| {
        let lin = if s >= 0.0 {
            big_p - big_p * (1.0 - p) * s / c
        } else {
            big_p + big_p * (big_p - 1.0) * s / c
        };
        lin.max(p)
    };
    Ok(k.integrate(phi, Side::Both))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmCheck {
    pub holds_first: bool,
    pub holds_second: bool,
    /// `∫_{s≥0} e^{ρ(m)s}K + ∫_{s<0} e^{ρ(M)s}K`, compared with `e^M`.
    pub first_lhs: f64,
    pub first_rhs: f64,
    /// `∫_{s≥0} e^{ρ(M)s}K + ∫_{s<0} e^{ρ(m)s}K`, compared with `e^m`.
    pub second_lhs: f64,
    pub second_rhs: f64,
}

/// Necessary conditions on `(m, M) = (−ln P, −ln p)` of a semi-wavefront.
pub fn mm_inequality_check(m: f64, big_m: f64, c: f64, k: &Kernel) -> Result<MmCheck> {
    let rm = rho(c, m)?;
    let r_big = rho(c, big_m)?;
    let first_lhs = k.exp_moment(rm, Side::Right) + k.exp_moment(r_big, Side::Left);
    let second_lhs = k.exp_moment(r_big, Side::Right) + k.exp_moment(rm, Side::Left);
    let first_rhs = big_m.exp();
    let second_rhs = m.exp();
    let tol = 1e-12;
    Ok(MmCheck {
        holds_first: first_lhs >= first_rhs * (1.0 - tol),
        holds_second: second_lhs <= second_rhs * (1.0 + tol),
        first_lhs,
        first_rhs,
        second_lhs,
        second_rhs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub c: f64,
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub kernel_mass: f64,
    pub u_bound: Option<UBound>,
    pub beta: Option<f64>,
    pub b: Option<f64>,
    pub fz_root: Option<f64>,
    pub fz_diagnostic: Option<String>,
    pub semi_wavefront_exists: bool,
    pub monotone_front_exists: bool,
    pub convergence: Option<ConvergenceVerdict>,
    pub pp_extremes: Option<(f64, f64)>,
    pub a_star: Option<(f64, f64)>,
    pub region_case: Option<RegionCase>,
    /// `(c, M*·√∫s²K)`; a comparison number only, not a verdict.
    pub l2_comparison: Option<(f64, f64)>,
}

/// Full decision-layer report for a kernel at speed `c`.
pub fn classify(c: f64, k: &Kernel, m_star: Option<f64>) -> Result<RegimeReport> {
    let ap = k.alpha_plus(c)?;
    let am = k.alpha_minus(c)?;
    let semi = c >= 2.0;
    let mut rep = RegimeReport {
        c,
        alpha_plus: ap,
        alpha_minus: am,
        kernel_mass: k.total_mass(),
        u_bound: None,
        beta: None,
        b: None,
        fz_root: None,
        fz_diagnostic: None,
        semi_wavefront_exists: semi,
        monotone_front_exists: false,
        convergence: None,
        pp_extremes: None,
        a_star: a_star(ap, am),
        region_case: RegionCase::classify(ap, am),
        l2_comparison: None,
    };
    if !semi {
        return Ok(rep);
    }
    let u = u_bound(c, k)?;
    let m_star = m_star.unwrap_or(u.value);
    if !(m_star >= 1.0) {
        return Err(Error::Domain(format!("M* must be at least 1, got {m_star}")));
    }
    let beta = u.value + 1.0;
    let fz = fang_zhao_negative_root(c, k);
    rep.u_bound = Some(u);
    rep.beta = Some(beta);
    rep.b = Some(2.0 * beta + 3.0);
    rep.monotone_front_exists = fz.root.is_some();
    rep.fz_root = fz.root;
    rep.fz_diagnostic = Some(fz.diagnostic);
    rep.convergence = Some(convergence_from_alphas(ap, am, m_star));
    rep.pp_extremes = pp_feasible_set(ap, am, m_star.max(1.0), 400)?.extremes;
    rep.l2_comparison = Some((c, m_star * k.second_moment().sqrt()));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_examples() {
        assert_eq!(f_func(2.0, 0.0).unwrap(), 0.0);
        assert_eq!(f_func(2.0, -1.0).unwrap(), -1.0);
        assert_eq!(f_func(2.0, 3.0).unwrap(), 1.0);
        assert!(f_func(2.0, -1.5).is_err());
    }

    #[test]
    fn u_bound_right_atom() {
        let u = u_bound(2.0, &Kernel::dirac(1.0)).unwrap();
        assert!((u.value - std::f64::consts::E).abs() < 1e-12);
        assert!(u.u2.is_none());
    }

    #[test]
    fn u_bound_pure_advance_uses_second_formula() {
        let u = u_bound(2.0, &Kernel::dirac(-1.0)).unwrap();
        assert_eq!(u.r, Some(1.0));
        let s = u.sigma.unwrap();
        // 4/(e^σ + 1) = 0.01 at the threshold when λ = 1, c = 2.
        assert!((s - 399f64.ln()).abs() < 1e-8);
        assert!((u.value - 2.0 * (1.0 + s).exp()).abs() < 1e-9 * u.value);
    }

    #[test]
    fn estm_examples() {
        assert!((estm_bound(0.1, 0.2).unwrap() - (0.9 + 0.41f64.sqrt()) / 0.2).abs() < 1e-12);
        assert!((estm_bound(0.25, 0.2499999999).unwrap() - 2.0).abs() < 1e-4);
        assert!(estm_bound(0.3, 0.3).is_err());
        assert!(estm_bound(0.0, 0.3).is_err());
        assert!(estm_bound(1e-9, 0.3).unwrap() > 1e8);
    }

    #[test]
    fn verdict_examples() {
        assert_eq!(convergence_from_alphas(0.2, 0.1, 3.0).verdict, Convergence::GuaranteedCase1);
        assert_eq!(convergence_from_alphas(0.0, 0.3, 100.0).verdict, Convergence::GuaranteedCase2);
        assert_eq!(convergence_from_alphas(0.0, 0.3, 1.0).verdict, Convergence::GuaranteedCase2);
        assert_eq!(convergence_from_alphas(0.1, 0.2, 5.0).verdict, Convergence::GuaranteedCase3);
        assert_eq!(convergence_from_alphas(0.1, 0.2, 8.0).verdict, Convergence::NotGuaranteed);
    }

    #[test]
    fn theta_examples() {
        let k = Kernel::dirac(0.0);
        assert!((theta_improved(0.4, 1.7, 2.5, &k).unwrap() - 1.7).abs() < 1e-15);
        let c = 2.5;
        let k = Kernel::dirac(c);
        assert!((theta_improved(0.5, 1.5, c, &k).unwrap() - 0.75).abs() < 1e-15);
        let k = Kernel::uniform(-3.0, 3.0, 301).unwrap();
        assert!((theta_improved(1.0, 1.0, c, &k).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mm_examples() {
        let k = Kernel::dirac(0.0);
        let r = mm_inequality_check(0.0, 0.0, 2.5, &k).unwrap();
        assert!(r.holds_first && r.holds_second);
        let r = mm_inequality_check(-0.1, 0.1, 2.5, &k).unwrap();
        assert!(!r.holds_first);
    }

    #[test]
    fn case_a_collapses_to_corner() {
        let fs = pp_feasible_set(0.0, 0.3, 5.0, 400).unwrap();
        let pts: Vec<_> = fs.points().filter(|p| p.2).collect();
        assert!(!pts.is_empty());
        for (p, bp, _) in pts {
            assert!((p - 1.0).abs() <= 2.5e-3 && (bp - 1.0).abs() <= 2.5e-3);
        }
    }

    #[test]
    fn region_cases() {
        assert_eq!(RegionCase::classify(0.0, 0.3), Some(RegionCase::A));
        assert_eq!(RegionCase::classify(0.0, 0.5), Some(RegionCase::B));
        assert_eq!(RegionCase::classify(0.2, 0.0), Some(RegionCase::C));
        assert_eq!(RegionCase::classify(0.2, 0.2), Some(RegionCase::D));
        assert_eq!(RegionCase::classify(0.3, 0.2), Some(RegionCase::E));
        assert_eq!(RegionCase::classify(0.0, 0.0), None);
    }

    #[test]
    fn below_minimal_speed() {
        let rep = classify(1.5, &Kernel::dirac(0.0), None).unwrap();
        assert!(!rep.semi_wavefront_exists);
        assert!(rep.u_bound.is_none());
    }
}
