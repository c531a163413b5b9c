//! Roots of the characteristic functions: the quadratic at the trivial state,
//! the monotonicity equation `λ² − cλ − ∫K e^{−λs} = 0`, the delay
//! quasipolynomials `z − e^{−τz}` and `εz² + z − e^{−τz}`, and the steady-state
//! equation of the delayed toy model.
//!
//! Complex roots are counted with the argument principle (the phase change of
//! `f` around a rectangle, refined adaptively) before they are located, so a
//! root chain cannot be missed inside the search rectangle.

use std::f64::consts::PI;

pub use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Kernel, Side};

/// Roots closer than this are treated as one.
pub const DEDUP_RADIUS: f64 = 1e-6;
const MAX_EVALUATIONS: usize = 4_000_000;
const COUNT_TOL: f64 = 1e-3;
const CONTOUR_SHIFT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionId {
    Quad,
    FangZhao,
    Chi1,
    EpsAdvanced,
    ToySteady,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

impl Root {
    pub fn z(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

/// Closed axis-parallel rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re_lo: f64,
    pub re_hi: f64,
    pub im_lo: f64,
    pub im_hi: f64,
}

impl Rect {
    fn split(&self, offset: f64) -> (Rect, Rect) {
        let w = self.re_hi - self.re_lo;
        let h = self.im_hi - self.im_lo;
        if w >= h {
            let m = self.re_lo + (0.5 + offset) * w;
            (Rect { re_hi: m, ..*self }, Rect { re_lo: m, ..*self })
        } else {
            let m = self.im_lo + (0.5 + offset) * h;
            (Rect { im_hi: m, ..*self }, Rect { im_lo: m, ..*self })
        }
    }

    fn contains(&self, z: C64, slack: f64) -> bool {
        z.re >= self.re_lo - slack && z.re <= self.re_hi + slack && z.im >= self.im_lo - slack && z.im <= self.im_hi + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strip_lo: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootReport {
    pub function_id: FunctionId,
    pub region: Rect,
    pub params: ReportParams,
    pub count: usize,
    pub roots: Vec<Root>,
    /// A root lies on the nominal contour; the contour was moved outward by 1e−6.
    pub boundary: bool,
}

impl RootReport {
    pub fn root(&self, i: usize) -> Option<C64> {
        self.roots.get(i).map(Root::z)
    }
}

/// `λ(c) ≤ μ(c)`, the roots of `z² − cz + 1 = 0`.
pub fn quad_roots(c: f64) -> Result<(f64, f64)> {
    if !(c >= 2.0) || !c.is_finite() {
        return Err(Error::Domain(format!(
            "c = {c} < 2: the roots at zero are complex and no semi-wavefront exists"
        )));
    }
    let s = (c * c - 4.0).sqrt();
    let mu = 0.5 * (c + s);
    Ok((2.0 / (c + s), mu))
}

/// Outcome of the search for a negative root of `λ² − cλ − ∫K e^{−λs} = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FangZhaoResult {
    pub root: Option<f64>,
    pub scanned: (f64, f64),
    pub diagnostic: String,
}

pub const FZ_SCAN_DEPTH: f64 = 40.0;
const FZ_BRACKETS: usize = 400;

/// The characteristic function of the monotone-front criterion.
pub fn fang_zhao_function(c: f64, k: &Kernel, lam: f64) -> f64 {
    lam * lam - c * lam - k.exp_moment(-lam, Side::Both)
}

/// Largest negative root of the monotone-front characteristic equation.
pub fn fang_zhao_negative_root(c: f64, k: &Kernel) -> FangZhaoResult {
    let h = |l: f64| fang_zhao_function(c, k, l);
    let step = FZ_SCAN_DEPTH / FZ_BRACKETS as f64;
    let mut hi = 0.0;
    let mut h_hi = h(0.0);
    for j in 1..=FZ_BRACKETS {
        let lo = -(j as f64) * step;
        let h_lo = h(lo);
        if h_lo == 0.0 {
            return found(lo, -FZ_SCAN_DEPTH);
        }
        if h_lo.signum() != h_hi.signum() && h_lo.is_finite() {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if h(m).signum() == h_lo.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            return found(0.5 * (a + b), lo);
        }
        hi = lo;
        h_hi = h_lo;
    }
    let diagnostic = match tail_certificate(c, k) {
        Some(s) => format!("no sign change on [-{FZ_SCAN_DEPTH}, 0); {s}"),
        None => format!("no sign change on [-{FZ_SCAN_DEPTH}, 0); no tail certificate for this kernel"),
    };
    FangZhaoResult {
        root: None,
        scanned: (-FZ_SCAN_DEPTH, 0.0),
        diagnostic,
    }
}

fn found(root: f64, lo: f64) -> FangZhaoResult {
    FangZhaoResult {
        root: Some(root),
        scanned: (lo, 0.0),
        diagnostic: "bracketed and bisected".into(),
    }
}

/// For a single atom at `s > 0`, `ln(λ² − cλ) + λs` is increasing on
/// `λ ≤ −Λ` whenever `s > 2/Λ`, so a negative value at `−Λ` persists below.
fn tail_certificate(c: f64, k: &Kernel) -> Option<String> {
    let atoms: Vec<_> = k.atoms().iter().filter(|a| a.mass > 0.0).collect();
    if k.density().is_some() || atoms.len() != 1 {
        return None;
    }
    let s = atoms[0].s;
    let l = -FZ_SCAN_DEPTH;
    if s > 2.0 / FZ_SCAN_DEPTH && fang_zhao_function(c, k, l) < 0.0 {
        Some(format!("tail certified negative below -{FZ_SCAN_DEPTH} for the atom at s = {s}"))
    } else {
        None
    }
}

/// Analytic function with derivative, as used by the contour routines.
pub trait Analytic {
    fn f(&self, z: C64) -> C64;
    fn df(&self, z: C64) -> C64;
}

struct Chi1 {
    tau: f64,
}

impl Analytic for Chi1 {
    fn f(&self, z: C64) -> C64 {
        z - (-z * self.tau).exp()
    }
    fn df(&self, z: C64) -> C64 {
        1.0 + self.tau * (-z * self.tau).exp()
    }
}

struct EpsAdvanced {
    tau: f64,
    eps: f64,
}

impl Analytic for EpsAdvanced {
    fn f(&self, z: C64) -> C64 {
        self.eps * z * z + z - (-z * self.tau).exp()
    }
    fn df(&self, z: C64) -> C64 {
        2.0 * self.eps * z + 1.0 + self.tau * (-z * self.tau).exp()
    }
}

struct ToySteady {
    c: f64,
    c_tau: f64,
}

impl Analytic for ToySteady {
    fn f(&self, z: C64) -> C64 {
        z * z - self.c * z - (-z * self.c_tau).exp()
    }
    fn df(&self, z: C64) -> C64 {
        2.0 * z - self.c + self.c_tau * (-z * self.c_tau).exp()
    }
}

/// `χ₁(z) = z − e^{−zτ}`.
pub fn chi1(tau: f64, z: C64) -> C64 {
    Chi1 { tau }.f(z)
}

/// `εz² + z − e^{−τz}`.
pub fn eps_advanced(tau: f64, eps: f64, z: C64) -> C64 {
    EpsAdvanced { tau, eps }.f(z)
}

/// Change of `arg f` along the segment `a → b`, subdividing wherever the
/// phase moves by more than half a radian between samples. Passing close to a
/// zero turns the phase by nearly π, which always triggers refinement.
fn phase_change<F: Analytic + ?Sized>(f: &F, a: C64, b: C64, fa: C64, fb: C64, depth: usize, budget: &mut usize) -> Option<f64> {
    let d = (fb / fa).arg();
    if d.abs() <= 0.5 {
        return Some(d);
    }
    if depth >= 64 || *budget == 0 {
        return None;
    }
    *budget -= 1;
    let m = 0.5 * (a + b);
    let fm = f.f(m);
    if fm.norm() == 0.0 || !fm.is_finite() {
        return None;
    }
    Some(phase_change(f, a, m, fa, fm, depth + 1, budget)? + phase_change(f, m, b, fm, fb, depth + 1, budget)?)
}

/// Winding number of `f` around `rect`.
fn winding<F: Analytic + ?Sized>(f: &F, rect: &Rect) -> Option<f64> {
    let corners = [
        C64::new(rect.re_lo, rect.im_lo),
        C64::new(rect.re_hi, rect.im_lo),
        C64::new(rect.re_hi, rect.im_hi),
        C64::new(rect.re_lo, rect.im_hi),
    ];
    let panels = 32;
    let mut total = 0.0;
    let mut budget = MAX_EVALUATIONS;
    for e in 0..4 {
        let a = corners[e];
        let dz = (corners[(e + 1) % 4] - a) / panels as f64;
        let mut z0 = a;
        let mut f0 = f.f(z0);
        for j in 1..=panels {
            let z1 = a + dz * j as f64;
            let f1 = f.f(z1);
            if f0.norm() == 0.0 || f1.norm() == 0.0 || !f0.is_finite() || !f1.is_finite() {
                return None;
            }
            total += phase_change(f, z0, z1, f0, f1, 0, &mut budget)?;
            z0 = z1;
            f0 = f1;
        }
    }
    Some(total / (2.0 * PI))
}

fn contour_count<F: Analytic + ?Sized>(f: &F, rect: &Rect) -> Option<usize> {
    let w = winding(f, rect)?;
    ((w - w.round()).abs() < COUNT_TOL && w.round() >= 0.0).then(|| w.round() as usize)
}

/// Argument-principle root count inside `rect`.
pub fn count_roots<F: Analytic + ?Sized>(f: &F, rect: &Rect) -> Result<usize> {
    contour_count(f, rect).ok_or_else(|| Error::Numeric("contour count did not settle; a root may lie on the contour".into()))
}

/// Complex Newton iteration; returns the last iterate and its residual.
pub fn newton<F: Analytic + ?Sized>(f: &F, mut z: C64, max_iter: usize) -> (C64, f64) {
    for _ in 0..max_iter {
        let fz = f.f(z);
        let d = f.df(z);
        if d.norm() == 0.0 || !fz.is_finite() {
            break;
        }
        let step = fz / d;
        z -= step;
        if step.norm() <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    (z, f.f(z).norm())
}

fn locate<F: Analytic + ?Sized>(f: &F, rect: &Rect, depth: usize, out: &mut Vec<C64>) -> Result<()> {
    let n = contour_count(f, rect).ok_or_else(|| Error::Numeric("root on an internal contour".into()))?;
    if n == 0 {
        return Ok(());
    }
    let size = (rect.re_hi - rect.re_lo).max(rect.im_hi - rect.im_lo);
    if n == 1 {
        let center = C64::new(0.5 * (rect.re_lo + rect.re_hi), 0.5 * (rect.im_lo + rect.im_hi));
        let (z, res) = newton(f, center, 60);
        let slack = 1e-9 * (1.0 + z.norm());
        if res <= 1e-9 * (1.0 + z.norm_sqr()) && rect.contains(z, slack) {
            out.push(z);
            return Ok(());
        }
        if size < 1e-12 {
            out.push(center);
            return Ok(());
        }
    }
    if depth > 80 {
        return Err(Error::Numeric("could not separate roots".into()));
    }
    // Offsets keep split lines away from roots that sit on exact midpoints.
    for offset in [0.0137, -0.0291, 0.0419, -0.0577] {
        let (a, b) = rect.split(offset);
        let mut found = Vec::new();
        if locate(f, &a, depth + 1, &mut found).is_ok() && locate(f, &b, depth + 1, &mut found).is_ok() {
            out.extend(found);
            return Ok(());
        }
    }
    Err(Error::Numeric("could not separate roots".into()))
}

fn symmetrize(mut roots: Vec<C64>) -> Vec<C64> {
    for z in roots.iter_mut() {
        if z.im.abs() < 1e-9 * (1.0 + z.re.abs()) {
            z.im = 0.0;
        }
    }
    let mut out: Vec<C64> = Vec::new();
    for z in roots {
        if out.iter().all(|w| (w - z).norm() > DEDUP_RADIUS) {
            out.push(z);
        }
    }
    let mut paired = out.clone();
    for (i, z) in out.iter().enumerate() {
        if z.im > 0.0 {
            if let Some(j) = out.iter().position(|w| (w - z.conj()).norm() <= 1e-6 * (1.0 + z.norm())) {
                let w = out[j];
                let re = 0.5 * (z.re + w.re);
                let im = 0.5 * (z.im - w.im);
                paired[i] = C64::new(re, im);
                paired[j] = C64::new(re, -im);
            }
        }
    }
    paired.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    paired
}

fn report<F: Analytic + ?Sized>(
    f: &F,
    function_id: FunctionId,
    rect: Rect,
    params: ReportParams,
    boundary: bool,
) -> Result<RootReport> {
    let count = count_roots(f, &rect)?;
    let mut found = Vec::new();
    locate(f, &rect, 0, &mut found)?;
    let roots: Vec<Root> = symmetrize(found)
        .into_iter()
        .map(|z| Root {
            re: z.re,
            im: z.im,
            residual: f.f(z).norm(),
        })
        .collect();
    if roots.len() != count {
        return Err(Error::Numeric(format!(
            "argument principle counts {count} roots but {} were located",
            roots.len()
        )));
    }
    Ok(RootReport {
        function_id,
        region: rect,
        params,
        count,
        roots,
        boundary,
    })
}

/// Roots of `z − e^{−zτ}` with `Re z ≥ 0`.
pub fn chi1_roots(tau: f64) -> Result<RootReport> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let f = Chi1 { tau };
    // Zeros on the imaginary axis can only be ±i, which happens when e^{−iτ} = i.
    let boundary = chi1(tau, C64::new(0.0, 1.0)).norm() < 1e-8;
    let re_lo = if boundary { -CONTOUR_SHIFT } else { 0.0 };
    let mut prev: Option<usize> = None;
    let mut n_band = 0usize;
    loop {
        let h = (2.0 * PI / tau) * (n_band as f64 + 1.0);
        let rect = Rect {
            re_lo,
            re_hi: 2.0,
            im_lo: -h,
            im_hi: h,
        };
        let count = count_roots(&f, &rect)?;
        // Zeros with Re z ≥ 0 satisfy |z| = e^{−τ Re z} ≤ 1.
        if h > 1.0 && prev == Some(count) {
            let params = ReportParams {
                tau: Some(tau),
                ..Default::default()
            };
            return report(&f, FunctionId::Chi1, rect, params, boundary);
        }
        prev = Some(count);
        n_band += 1;
        if n_band > 10_000 {
            return Err(Error::Numeric("root count did not stabilize".into()));
        }
    }
}

/// Roots of `εz² + z − e^{−τz}` with `Re z > strip_lo`.
pub fn eps_advanced_roots(tau: f64, eps: f64, strip_lo: f64) -> Result<RootReport> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("eps must be nonnegative, got {eps}")));
    }
    // The fast root near −1/ε lies outside Re z ≥ −1/(2ε), where |εz + 1| ≥ 1/2.
    let lo = if eps > 0.0 { strip_lo.max(-0.5 / eps) } else { strip_lo };
    let f = EpsAdvanced { tau, eps };
    let r = 2.0 * (-tau * lo).exp() + 1.0;
    let params = ReportParams {
        tau: Some(tau),
        eps: Some(eps),
        strip_lo: Some(strip_lo),
        ..Default::default()
    };
    let rect = Rect {
        re_lo: lo,
        re_hi: r,
        im_lo: -r,
        im_hi: r,
    };
    match report(&f, FunctionId::EpsAdvanced, rect, params, false) {
        Ok(rep) => Ok(rep),
        Err(_) => {
            let rect = Rect {
                re_lo: lo - CONTOUR_SHIFT,
                ..rect
            };
            report(&f, FunctionId::EpsAdvanced, rect, params, true)
        }
    }
}

/// The real root `z₁(τ, ε) > 0` of `εz² + z − e^{−τz}`; the left side is increasing for `z ≥ 0`.
pub fn leading_real_root(tau: f64, eps: f64) -> Result<f64> {
    if !(tau > 0.0) || !(eps >= 0.0) {
        return Err(Error::Domain(format!("need tau > 0 and eps >= 0, got ({tau}, {eps})")));
    }
    let g = |z: f64| eps * z * z + z - (-tau * z).exp();
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if g(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Root of `z² − cz − e^{−z·cτ}` reached by complex Newton from `near`.
pub fn toy_steady_roots(c: f64, c_tau: f64, near: C64) -> Result<C64> {
    if !(c > 0.0) || !(c_tau > 0.0) {
        return Err(Error::Domain(format!("need c > 0 and c·tau > 0, got ({c}, {c_tau})")));
    }
    let f = ToySteady { c, c_tau };
    let mut z = near;
    for _ in 0..100 {
        let fz = f.f(z);
        if fz.norm() <= 1e-14 * (1.0 + z.norm_sqr()) {
            break;
        }
        let d = f.df(z);
        if d.norm() == 0.0 || !fz.is_finite() {
            break;
        }
        z -= fz / d;
    }
    let res = f.f(z).norm();
    if res <= 1e-10 {
        Ok(z)
    } else {
        Err(Error::NoConvergence {
            iterations: 100,
            residual: res,
        })
    }
}

/// A [`RootReport`] for a single Newton-located toy-model root.
pub fn toy_steady_report(c: f64, c_tau: f64, near: C64) -> Result<RootReport> {
    let z = toy_steady_roots(c, c_tau, near)?;
    let f = ToySteady { c, c_tau };
    Ok(RootReport {
        function_id: FunctionId::ToySteady,
        region: Rect {
            re_lo: z.re,
            re_hi: z.re,
            im_lo: z.im,
            im_hi: z.im,
        },
        params: ReportParams {
            c: Some(c),
            c_tau: Some(c_tau),
            ..Default::default()
        },
        count: 1,
        roots: vec![Root {
            re: z.re,
            im: z.im,
            residual: f.f(z).norm(),
        }],
        boundary: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_roots() {
        assert_eq!(quad_roots(2.0).unwrap(), (1.0, 1.0));
        assert_eq!(quad_roots(2.5).unwrap(), (0.5, 2.0));
        let (l, m) = quad_roots(3.0).unwrap();
        assert!((l - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((m - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!(quad_roots(1.99).is_err());
    }

    #[test]
    fn local_kernel_monotone_root() {
        let r = fang_zhao_negative_root(2.0, &Kernel::dirac(0.0)).root.unwrap();
        assert!((r - (2.0 - 8f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn large_delay_has_no_monotone_root() {
        let res = fang_zhao_negative_root(2.5, &Kernel::dirac(5.0));
        assert!(res.root.is_none());
        assert!(res.diagnostic.contains("certified"));
    }

    #[test]
    fn chi1_small_delay_has_one_root() {
        let rep = chi1_roots(1.0).unwrap();
        assert_eq!(rep.count, 1);
        assert!((rep.roots[0].re - 0.567_143_290_409_783_8).abs() < 1e-9);
        assert!(!rep.boundary);
    }

    #[test]
    fn chi1_boundary_case_is_flagged() {
        let rep = chi1_roots(1.5 * PI).unwrap();
        assert!(rep.boundary);
        assert_eq!(rep.count, 3);
    }

    #[test]
    fn eps_zero_agrees_with_chi1() {
        let a = chi1_roots(5.0).unwrap();
        let b = eps_advanced_roots(5.0, 0.0, 0.0).unwrap();
        assert_eq!(a.count, b.count);
        for (x, y) in a.roots.iter().zip(&b.roots) {
            assert!((x.z() - y.z()).norm() < 1e-9);
        }
    }

    #[test]
    fn toy_roots() {
        let ct = 2.0 * 1.5f64.ln();
        let z = toy_steady_roots(2.5, ct, C64::new(-0.5, 0.0)).unwrap();
        assert!((z.re + 0.5).abs() < 1e-12 && z.im == 0.0);
        assert!(toy_steady_roots(2.5, ct, C64::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn leading_root_matches_located_root() {
        let rep = eps_advanced_roots(5.0, 0.01, 0.0).unwrap();
        let z1 = leading_real_root(5.0, 0.01).unwrap();
        assert!((rep.roots[0].re - z1).abs() < 1e-9);
    }
}
