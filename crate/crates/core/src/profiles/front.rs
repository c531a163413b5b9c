//! Fixed-point construction of wave profiles `φ'' − cφ' + φ(1 − K∗φ) = 0`.
//!
//! The profile equation is rewritten as `φ = A_m φ` with
//! `A_m φ = (b − D² + cD)⁻¹ r(φ)` and `r(φ) = bφ + g_β(φ)(1 − K∗φ)`. The
//! inverse is the discrete Green's operator of the centered difference
//! operator on the profile grid, so a fixed point of `A_m` is an exact zero of
//! the centered-difference residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Atom, Kernel, Side};
use crate::linalg::{gmres, GmresOptions};
use crate::profiles::profile::{Profile, RightTail};
use crate::regimes::{u_bound, UBound};
use crate::spectral::quad_roots;

pub const DEFAULT_DT: f64 = 0.02;

/// `u` on `[0, β]`, `max(0, 2β − u)` above.
pub fn g_beta(u: f64, beta: f64) -> f64 {
    if u <= beta {
        u
    } else {
        (2.0 * beta - u).max(0.0)
    }
}

fn dg_beta(u: f64, beta: f64) -> f64 {
    if u < beta {
        1.0
    } else if u < 2.0 * beta {
        -1.0
    } else {
        0.0
    }
}

/// Speed-dependent constants shared by the upper and lower solutions and `A_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveContext {
    pub c: f64,
    pub lambda: f64,
    pub mu: f64,
    pub beta: f64,
    pub b: f64,
    pub z1: f64,
    pub z2: f64,
    pub z12: f64,
    pub u: UBound,
    pub kernel: Kernel,
}

impl WaveContext {
    /// Defaults `β = U(c, K) + 1`, `b = 2β + 3`.
    pub fn new(c: f64, kernel: Kernel) -> Result<Self> {
        let u = u_bound(c, &kernel)?;
        let beta = u.value + 1.0;
        Self::build(c, kernel, u, beta, 2.0 * beta + 3.0)
    }

    pub fn with_constants(c: f64, kernel: Kernel, beta: f64, b: f64) -> Result<Self> {
        let u = u_bound(c, &kernel)?;
        if !(beta > u.value) {
            return Err(Error::Domain(format!("beta = {beta} must exceed U = {}", u.value)));
        }
        if !(b > 2.0 * beta + 2.0) {
            return Err(Error::Domain(format!("b = {b} must exceed 2·beta + 2 = {}", 2.0 * beta + 2.0)));
        }
        Self::build(c, kernel, u, beta, b)
    }

    fn build(c: f64, kernel: Kernel, u: UBound, beta: f64, b: f64) -> Result<Self> {
        if !kernel.is_normalized() {
            return Err(Error::InvalidKernel("kernel must be normalized".into()));
        }
        let (lambda, mu) = quad_roots(c)?;
        let s = (c * c + 4.0 * b).sqrt();
        let z2 = 0.5 * (c + s);
        let z1 = -b / z2;
        Ok(Self {
            c,
            lambda,
            mu,
            beta,
            b,
            z1,
            z2,
            z12: z2 - z1,
            u,
            kernel,
        })
    }

    /// Default grid `(t0, dt, n)` covering `[−40/λ, 40 + 8·R]` with a node at 0.
    pub fn default_grid(&self) -> (f64, f64, usize) {
        let dt = DEFAULT_DT;
        let left = (40.0 / self.lambda / dt).ceil();
        let right = ((40.0 + 8.0 * self.kernel.support_radius()) / dt).ceil();
        (-left * dt, dt, (left + right) as usize + 1)
    }
}

/// Closed form of the monotone front of `φ'' − cφ' + g_β(φ) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperFront {
    pub c: f64,
    pub lambda: f64,
    pub mu: f64,
    pub beta: f64,
    /// Where the front crosses `β`.
    pub t_beta: f64,
    /// `C` in `e^{λt} − Ce^{μt}` for `c > 2`, or `D` in `(D − t)e^t` for `c = 2`.
    pub coef: f64,
    /// Negative root of `z² − cz − 1 = 0`, the decay rate above `β`.
    pub nu: f64,
}

impl UpperFront {
    pub fn new(ctx: &WaveContext) -> Self {
        let c = ctx.c;
        let beta = ctx.beta;
        let nu = 0.5 * (c - (c * c + 4.0).sqrt());
        let an = -nu;
        if ctx.mu > ctx.lambda {
            let (l, m) = (ctx.lambda, ctx.mu);
            let x = beta * (m - an) / (m - l);
            let y = beta * (l - an) / (m - l);
            let t_beta = x.ln() / l;
            Self {
                c,
                lambda: l,
                mu: m,
                beta,
                t_beta,
                coef: y * (-m * t_beta).exp(),
                nu,
            }
        } else {
            let t_beta = (beta * (1.0 - an)).ln();
            Self {
                c,
                lambda: 1.0,
                mu: 1.0,
                beta,
                t_beta,
                coef: t_beta + 1.0 / (1.0 - an),
                nu,
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.t_beta {
            if self.mu > self.lambda {
                (self.lambda * t).exp() - self.coef * (self.mu * t).exp()
            } else {
                (self.coef - t) * t.exp()
            }
        } else {
            2.0 * self.beta - self.beta * (self.nu * (t - self.t_beta)).exp()
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t <= self.t_beta {
            if self.mu > self.lambda {
                self.lambda * (self.lambda * t).exp() - self.mu * self.coef * (self.mu * t).exp()
            } else {
                (self.coef - t - 1.0) * t.exp()
            }
        } else {
            -self.beta * self.nu * (self.nu * (t - self.t_beta)).exp()
        }
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        if t <= self.t_beta {
            if self.mu > self.lambda {
                self.lambda.powi(2) * (self.lambda * t).exp() - self.mu.powi(2) * self.coef * (self.mu * t).exp()
            } else {
                (self.coef - t - 2.0) * t.exp()
            }
        } else {
            -self.beta * self.nu * self.nu * (self.nu * (t - self.t_beta)).exp()
        }
    }
}

/// The upper solution `φ₊` sampled on the context's default grid.
pub fn kpp_upper_front(ctx: &WaveContext) -> Result<Profile> {
    let (t0, dt, n) = ctx.default_grid();
    upper_on_grid(ctx, t0, dt, n)
}

pub fn upper_on_grid(ctx: &WaveContext, t0: f64, dt: f64, n: usize) -> Result<Profile> {
    let up = UpperFront::new(ctx);
    Profile::from_fn(t0, dt, n, |t| up.value(t), 0.0, RightTail::Constant(2.0 * ctx.beta))
}

fn chi(ctx: &WaveContext, z: f64) -> f64 {
    z * z - ctx.c * z + 1.0
}

/// Parameters of the lower solution `max{0, e^{λt}(1 − Me^{εt})}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerParams {
    pub eps: f64,
    pub m: f64,
    pub m_min: f64,
    /// `sup φ₊(t)e^{−εt}`.
    pub l_sup: f64,
}

fn upper_weighted_sup(ctx: &WaveContext, eps: f64, t0: f64, dt: f64, n: usize) -> f64 {
    let up = UpperFront::new(ctx);
    (0..n)
        .map(|i| {
            let t = t0 + i as f64 * dt;
            up.value(t) * (-eps * t).exp()
        })
        .fold(0.0, f64::max)
}

/// Smallest admissible `M` for a given `ε`; errors name the violated inequality.
pub fn lower_min_m(ctx: &WaveContext, eps: f64, grid: (f64, f64, usize)) -> Result<(f64, f64)> {
    let (l, m) = (ctx.lambda, ctx.mu);
    if !(l < m) {
        return Err(Error::Constraint("lambda < mu fails: the lower solution needs c > 2".into()));
    }
    if !(eps > 0.0 && eps < l) {
        return Err(Error::Constraint(format!("0 < eps < lambda fails for eps = {eps}, lambda = {l}")));
    }
    if !(l + eps < m) {
        return Err(Error::Constraint(format!("lambda + eps < mu fails for eps = {eps}")));
    }
    let l_sup = upper_weighted_sup(ctx, eps, grid.0, grid.1, grid.2);
    let moment = ctx.kernel.exp_moment(-eps, Side::Both);
    Ok((l_sup * moment / -chi(ctx, l + eps), l_sup))
}

pub fn lower_value(ctx: &WaveContext, eps: f64, m: f64, t: f64) -> f64 {
    ((ctx.lambda * t).exp() * (1.0 - m * (eps * t).exp())).max(0.0)
}

/// The lower solution on the context's default grid.
pub fn lower_solution(ctx: &WaveContext, eps: f64, m: f64) -> Result<Profile> {
    let grid = ctx.default_grid();
    let (m_min, _) = lower_min_m(ctx, eps, grid)?;
    if !(m > m_min) {
        return Err(Error::Constraint(format!(
            "-chi(lambda + eps) > (L/M)·∫K e^(-eps s) fails: M = {m} is not above {m_min}"
        )));
    }
    let (t0, dt, n) = grid;
    let p = Profile::from_fn(t0, dt, n, |t| lower_value(ctx, eps, m, t), 0.0, RightTail::Constant(0.0))?;
    let up = UpperFront::new(ctx);
    if let Some(i) = (0..n).find(|&i| p.values[i] > up.value(p.t(i)) * (1.0 + 1e-12)) {
        return Err(Error::Constraint(format!("lower <= upper fails at t = {}", p.t(i))));
    }
    Ok(p)
}

/// Default lower solution: `ε = min(λ/2, (μ−λ)/2)` and `M` twice the minimum,
/// doubled further until `φ₋ ≤ φ₊` holds on the grid.
pub fn default_lower(ctx: &WaveContext) -> Result<(Profile, LowerParams)> {
    let eps = (0.5 * ctx.lambda).min(0.5 * (ctx.mu - ctx.lambda));
    let grid = ctx.default_grid();
    let (m_min, l_sup) = lower_min_m(ctx, eps, grid)?;
    let mut m = 2.0 * m_min.max(f64::MIN_POSITIVE);
    for _ in 0..64 {
        match lower_solution(ctx, eps, m) {
            Ok(p) => {
                return Ok((
                    p,
                    LowerParams {
                        eps,
                        m,
                        m_min,
                        l_sup,
                    },
                ))
            }
            Err(Error::Constraint(_)) => m *= 2.0,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Constraint("no M found with lower <= upper on the grid".into()))
}

/// `(K ∗ φ)` at every grid node.
pub fn convolve_grid(k: &Kernel, p: &Profile) -> Result<Vec<f64>> {
    let n = p.len();
    let mut out = vec![0.0; n];
    let add = |mass: f64, s: f64, out: &mut Vec<f64>| -> Result<()> {
        if mass == 0.0 {
            return Ok(());
        }
        let x = s / p.dt;
        let r = x.round();
        if (x - r).abs() < 1e-9 {
            let shift = r as isize;
            for (i, o) in out.iter_mut().enumerate() {
                let j = i as isize - shift;
                let v = if j >= 0 && (j as usize) < n {
                    p.values[j as usize]
                } else if j < 0 {
                    p.left_limit
                } else {
                    p.value(p.t(i) - s)?
                };
                *o += mass * v;
            }
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o += mass * p.value(p.t(i) - s)?;
            }
        }
        Ok(())
    };
    for a in k.atoms() {
        add(a.mass, a.s, &mut out)?;
    }
    if let Some(d) = k.density() {
        for (j, w) in d.weights().into_iter().enumerate() {
            add(w * d.values()[j], d.node(j), &mut out)?;
        }
    }
    Ok(out)
}


/// Decay rate of the discrete mode `e^{λ_h t}` of `D² − cD + 1` closest to `λ`.
pub fn discrete_rate(c: f64, lambda: f64, h: f64) -> f64 {
    let g = |x: f64| (2.0 * (x * h).cosh() - 2.0) / (h * h) - c * (x * h).sinh() / h + 1.0;
    let dg = |x: f64| 2.0 * (x * h).sinh() / h - c * (x * h).cosh();
    let mut x = lambda;
    for _ in 0..50 {
        let d = dg(x);
        if d == 0.0 {
            break;
        }
        let step = g(x) / d;
        x -= step;
        if step.abs() < 1e-16 {
            break;
        }
    }
    x
}

/// Left end condition of the discrete Green's operator.
#[derive(Debug, Clone, Copy)]
enum LeftEnd {
    /// Fixed ghost value.
    Value(f64),
    /// Ghost equals `ρ ψ₀`, matching an exponential tail.
    Ratio(f64),
    /// Ghost continues `ψ` by the linear recurrence `ψ_{−1} = sψ₀ − pψ₁`,
    /// which holds for both decaying modes (used at `c = 2`).
    Recurrence(f64, f64),
}

/// `(s, p)` of the backward recurrence of `D² − cD + 1 = 0` on step `h`.
fn tail_recurrence(c: f64, h: f64) -> (f64, f64) {
    let back = 1.0 / (h * h) + c / (2.0 * h);
    ((2.0 / (h * h) - 1.0) / back, (1.0 / (h * h) - c / (2.0 * h)) / back)
}

/// Solve `(b − D² + cD)ψ = rhs` with the given left end condition. The right
/// ghost is the linear extrapolation `2ψ_{n−1} − ψ_{n−2}`, which is exact to
/// `O(h²ψ'')` for any smooth tail and keeps the matrix an M-matrix.
fn green_solve(c: f64, b: f64, h: f64, rhs: &mut [f64], left: LeftEnd, scratch: &mut Vec<f64>) {
    let lower = -1.0 / (h * h) - c / (2.0 * h);
    let diag = b + 2.0 / (h * h);
    let upper = -1.0 / (h * h) + c / (2.0 * h);
    let n = rhs.len();
    let (diag0, upper0) = match left {
        LeftEnd::Value(v) => {
            rhs[0] -= lower * v;
            (diag, upper)
        }
        LeftEnd::Ratio(rho) => (diag + lower * rho, upper),
        LeftEnd::Recurrence(s, p) => (diag + lower * s, upper - lower * p),
    };
    // Last row: (lower − upper)ψ_{n−2} + (diag + 2 upper)ψ_{n−1}.
    let (last_lower, last_diag) = (lower - upper, diag + 2.0 * upper);
    scratch.clear();
    scratch.resize(n, 0.0);
    if n == 1 {
        rhs[0] /= diag0 + 2.0 * upper;
        return;
    }
    let mut denom = diag0;
    scratch[0] = upper0 / denom;
    rhs[0] /= denom;
    for i in 1..n {
        let (l, d) = if i == n - 1 { (last_lower, last_diag) } else { (lower, diag) };
        denom = d - l * scratch[i - 1];
        scratch[i] = upper / denom;
        rhs[i] = (rhs[i] - l * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

fn left_end(ctx: &WaveContext, phi: &Profile) -> LeftEnd {
    if phi.left_limit == 0.0 && ctx.mu <= ctx.lambda {
        let (s, p) = tail_recurrence(ctx.c, phi.dt);
        LeftEnd::Recurrence(s, p)
    } else if phi.left_limit == 0.0 {
        LeftEnd::Ratio((-discrete_rate(ctx.c, ctx.lambda, phi.dt) * phi.dt).exp())
    } else {
        LeftEnd::Value(r_constant(ctx, phi.left_limit) / ctx.b)
    }
}

/// `r(φ) = bφ + g_β(φ)(1 − K∗φ)` at each node.
fn r_values(ctx: &WaveContext, p: &Profile, conv: &[f64]) -> Vec<f64> {
    p.values
        .iter()
        .zip(conv)
        .map(|(&v, &k)| ctx.b * v + g_beta(v, ctx.beta) * (1.0 - k))
        .collect()
}

fn r_constant(ctx: &WaveContext, v: f64) -> f64 {
    ctx.b * v + g_beta(v, ctx.beta) * (1.0 - v)
}

/// One application of the fixed-point operator `A_m`.
pub fn am_apply(phi: &Profile, ctx: &WaveContext) -> Result<Profile> {
    if ctx.c * phi.dt > 2.0 {
        return Err(Error::Domain(format!(
            "grid step {} too coarse for c = {}: the discrete Green's operator loses positivity",
            phi.dt, ctx.c
        )));
    }
    let conv = convolve_grid(&ctx.kernel, phi)?;
    let mut rhs = r_values(ctx, phi, &conv);
    let mut scratch = Vec::new();
    green_solve(ctx.c, ctx.b, phi.dt, &mut rhs, left_end(ctx, phi), &mut scratch);
    let mut out = phi.clone();
    out.values = rhs;
    out.diagnostics = Default::default();
    Ok(out)
}

/// Sup over interior nodes of `|φ'' − cφ' + φ(1 − K∗φ)|` by centered differences.
pub fn residual(phi: &Profile, c: f64, k: &Kernel) -> Result<f64> {
    Ok(residual_values(phi, c, k)?
        .iter()
        .skip(1)
        .take(phi.len().saturating_sub(2))
        .fold(0.0, |a: f64, r| a.max(r.abs())))
}

/// Pointwise centered-difference residual, using the extension at the ends.
pub fn residual_values(phi: &Profile, c: f64, k: &Kernel) -> Result<Vec<f64>> {
    if phi.len() < 5 {
        return Err(Error::Domain("residual needs at least five grid points".into()));
    }
    let conv = convolve_grid(k, phi)?;
    let d1 = phi.derivative();
    let d2 = phi.second_derivative();
    Ok((0..phi.len())
        .map(|i| d2[i] - c * d1[i] + phi.values[i] * (1.0 - conv[i]))
        .collect())
}

/// `sup_{s≤0} e^{−μ₂s}|φ| + sup_{s≥0} e^{−μ₁s}|φ|`; `+∞` when a tail is not dominated.
pub fn weighted_norm(phi: &Profile, mu1: f64, mu2: f64) -> f64 {
    let mut left: f64 = 0.0;
    let mut right: f64 = 0.0;
    let mut left_edge = None;
    for (i, &v) in phi.values.iter().enumerate() {
        let t = phi.t(i);
        if t <= 0.0 {
            let w = (-mu2 * t).exp() * v.abs();
            left_edge.get_or_insert((w, i));
            left = left.max(w);
        }
        if t >= 0.0 {
            right = right.max((-mu1 * t).exp() * v.abs());
        }
    }
    if mu2 > 0.0 {
        if phi.left_limit != 0.0 {
            return f64::INFINITY;
        }
        // A weighted value still growing at the left edge signals an undominated tail.
        if let Some((w_edge, i0)) = left_edge {
            let probe = (i0 + 10).min(phi.len() - 1);
            let tp = phi.t(probe);
            if tp <= 0.0 && w_edge > 0.0 && w_edge >= (-mu2 * tp).exp() * phi.values[probe].abs() {
                return f64::INFINITY;
            }
        }
    } else if mu2 == 0.0 {
        left = left.max(phi.left_limit.abs());
    }
    match phi.right_tail {
        RightTail::Constant(v) => {
            if v != 0.0 && mu1 < 0.0 {
                return f64::INFINITY;
            }
            if mu1 == 0.0 {
                right = right.max(v.abs());
            }
        }
        RightTail::Periodic { .. } => {
            if mu1 < 0.0 {
                return f64::INFINITY;
            }
        }
        RightTail::Truncated => {}
    }
    left + right
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Sup-norm tolerance on `φ − A_mφ`.
    pub tol: f64,
    pub max_iter: usize,
    pub relax: f64,
    /// Continuation steps `c + 1/j` used when `c = 2`.
    pub continuation_steps: usize,
    /// Check each Picard iterate against `[φ₋, φ₊]`.
    pub check_order: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 20_000,
            relax: 0.5,
            continuation_steps: 8,
            check_order: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Picard,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontSolution {
    pub profile: Profile,
    pub iterations: usize,
    pub method: SolveMethod,
    pub fixed_point_error: f64,
    pub lower: Option<LowerParams>,
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()))
}

/// Damped Picard iteration from `φ₊`, with a Newton–Krylov fallback when the
/// iteration stalls or diverges.
pub fn solve_front(ctx: &WaveContext, opts: &SolveOptions) -> Result<FrontSolution> {
    if ctx.mu > ctx.lambda {
        let start = kpp_upper_front(ctx)?;
        solve_from(ctx, start, opts, true)
    } else {
        solve_critical(ctx, opts)
    }
}

/// `c = 2`: solve at `2 + 1/j`, `j = 1..J`, warm-starting each step.
fn solve_critical(ctx: &WaveContext, opts: &SolveOptions) -> Result<FrontSolution> {
    let mut warm: Option<Profile> = None;
    for j in 1..=opts.continuation_steps.max(1) {
        let cj = ctx.c + 1.0 / j as f64;
        let cj_ctx = WaveContext::new(cj, ctx.kernel.clone())?;
        let start = match &warm {
            None => kpp_upper_front(&cj_ctx)?,
            Some(w) => {
                let (t0, dt, n) = cj_ctx.default_grid();
                w.resampled(t0, dt, n)?
            }
        };
        let sol = solve_from(&cj_ctx, start, opts, warm.is_none())?;
        warm = Some(sol.profile);
    }
    let (t0, dt, n) = ctx.default_grid();
    let start = warm.expect("at least one continuation step").resampled(t0, dt, n)?;
    solve_from(ctx, start, opts, false)
}

/// Below this fraction of its maximum the front is linear to rounding, and
/// iterating there only feeds the neutral tail-amplitude mode.
const TAIL_FLOOR: f64 = 1e-11;

/// Largest `|1 − φ|` allowed over the last stretch of the grid. Beyond the
/// grid the front is taken to be 1, so a larger gap shows up as a drift.
const RIGHT_TAIL_TOL: f64 = 1e-12;
const MAX_EXTENSIONS: usize = 3;
const SETTLING_GAP: f64 = 1e-3;
/// Defect accepted at the intermediate kernels of the continuation.
const CONTINUATION_TOL: f64 = 1e-7;

fn solve_from(ctx: &WaveContext, start: Profile, opts: &SolveOptions, from_upper: bool) -> Result<FrontSolution> {
    let mut phi = start;
    phi.left_limit = 0.0;
    phi.right_tail = RightTail::Constant(1.0);

    let params = if opts.check_order && from_upper && ctx.mu > ctx.lambda {
        Some(default_lower(ctx)?)
    } else {
        None
    };
    let mut picard = true;
    let mut total = 0;
    for attempt in 0..=MAX_EXTENSIONS {
        let bounds = match &params {
            Some((lower, _)) => {
                let mut lo = lower.clone();
                lo.values.resize(phi.len(), 0.0);
                Some((lo, upper_on_grid(ctx, phi.t0, phi.dt, phi.len())?))
            }
            None => None,
        };
        let cut = tail_cut(&phi);
        let core = sub_profile(&phi, cut);
        let bounds = bounds.map(|(lo, up)| (sub_profile(&lo, cut), sub_profile(&up, cut)));
        let (mut sol, mut iterations, mut method, mut err) = solve_core(ctx, core.clone(), opts, bounds.as_ref(), picard)?;
        if !(err < 1e-3) && !is_local(&ctx.kernel) {
            let (p, its, e) = kernel_homotopy(ctx, &core, opts)?;
            sol = p;
            iterations += its;
            method = SolveMethod::Newton;
            err = e;
        }
        total += iterations;
        let full = extend_tail(ctx, &sol, cut);
        // Oscillating tails do not settle on any finite grid; only a tail
        // that visibly approaches 1 is worth a longer grid.
        let gap = right_gap(&full);
        if gap <= RIGHT_TAIL_TOL || gap > SETTLING_GAP || attempt == MAX_EXTENSIONS {
            if !(err <= 10.0 * opts.tol) {
                return Err(Error::NoConvergence {
                    iterations: total,
                    residual: err,
                });
            }
            return finish(ctx, full, total, method, err, params.map(|p| p.1));
        }
        // Double the part of the grid right of the front and warm-start there.
        let half = full.crossing(0.5).unwrap_or(0.0);
        let extra = ((full.t_end() - half) / full.dt).ceil() as usize;
        phi = full;
        phi.values.resize(phi.len() + extra, 1.0);
        picard = method == SolveMethod::Picard;
    }
    unreachable!("the last attempt always returns")
}

fn right_gap(p: &Profile) -> f64 {
    let n = p.len();
    p.values[n - n / 20..].iter().fold(0.0, |m: f64, v| m.max((1.0 - v).abs()))
}

fn tail_cut(p: &Profile) -> usize {
    let max = p.values.iter().fold(0.0, |m: f64, v| m.max(*v));
    p.values
        .iter()
        .position(|&v| v >= TAIL_FLOOR * max)
        .unwrap_or(0)
}

fn sub_profile(p: &Profile, cut: usize) -> Profile {
    let mut q = p.clone();
    q.t0 = p.t(cut);
    q.values = p.values[cut..].to_vec();
    q
}

/// Prepend `cut` nodes continuing the core by the backward recurrence of the
/// linearization at 0, where the front is linear to rounding.
fn extend_tail(ctx: &WaveContext, core: &Profile, cut: usize) -> Profile {
    if cut == 0 {
        return core.clone();
    }
    let (s, p) = tail_recurrence(ctx.c, core.dt);
    let mut rev = vec![core.values[1], core.values[0]];
    for _ in 0..cut {
        let k = rev.len();
        rev.push(s * rev[k - 1] - p * rev[k - 2]);
    }
    let mut values: Vec<f64> = rev[2..].iter().rev().copied().collect();
    values.extend_from_slice(&core.values);
    let mut out = core.clone();
    out.t0 = core.t0 - cut as f64 * core.dt;
    out.values = values;
    out
}

/// Damped Picard, then bordered Newton. Returns the best iterate and its
/// fixed-point defect; `∞` when neither got close.
fn solve_core(
    ctx: &WaveContext,
    mut phi: Profile,
    opts: &SolveOptions,
    order: Option<&(Profile, Profile)>,
    picard: bool,
) -> Result<(Profile, usize, SolveMethod, f64)> {
    let mut relax = opts.relax;
    let mut prev = f64::INFINITY;
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut err = if picard { f64::INFINITY } else { 0.0 };
    while picard && iterations < opts.max_iter {
        let a = am_apply(&phi, ctx)?;
        err = sup_diff(&a.values, &phi.values);
        iterations += 1;
        if !err.is_finite() {
            break;
        }
        if err <= opts.tol {
            phi.values = a.values;
            return Ok((phi, iterations, SolveMethod::Picard, err));
        }
        if err > prev * 1.05 {
            relax *= 0.5;
        }
        prev = err;
        history.push(err);
        if relax < 1.0 / 64.0 || stalled(&history) {
            break;
        }
        for (v, av) in phi.values.iter_mut().zip(&a.values) {
            *v = (1.0 - relax) * *v + relax * av;
        }
        if let Some((lower, upper)) = order {
            check_order(ctx, &phi, lower, upper)?;
        }
    }
    if !(err < 1e-2) {
        return Ok((phi, iterations, SolveMethod::Picard, f64::INFINITY));
    }
    let (p, its, e) = newton_krylov(ctx, phi, opts)?;
    Ok((p, iterations + its, SolveMethod::Newton, e))
}

fn is_local(k: &Kernel) -> bool {
    k.density().is_none() && k.atoms().iter().all(|a| a.s == 0.0)
}

/// No tenfold decrease over the last 400 iterations.
fn stalled(history: &[f64]) -> bool {
    let w = 400;
    history.len() > w && history[history.len() - 1] > 0.1 * history[history.len() - 1 - w]
}

/// Relative slack allows for the drift `e^{(λ_h − λ)t}` between the discrete
/// and continuous exponential tails.
fn check_order(ctx: &WaveContext, phi: &Profile, lower: &Profile, upper: &Profile) -> Result<()> {
    let drift = discrete_rate(ctx.c, ctx.lambda, phi.dt) - ctx.lambda;
    for i in 0..phi.len() {
        let v = phi.values[i];
        let lo = lower.values[i];
        let hi = upper.values[i];
        let rel = 1e-4 + (drift * phi.t(i)).exp_m1().abs();
        let slack = rel * hi.abs().max(1e-300);
        if v < lo - slack || v > hi + slack.max(1e-12) {
            return Err(Error::InvariantViolation(format!(
                "iterate left the order interval at t = {}: {lo} <= {v} <= {hi} fails",
                phi.t(i)
            )));
        }
    }
    Ok(())
}

/// Newton–GMRES on `φ − A_mφ = 0`. The end conditions of `A_m` hold for
/// every translate of the front, so the Jacobian is nearly singular along
/// `φ'`. Each step is bordered by that direction: `Jδ + sφ' = −F`,
/// `⟨φ', δ⟩ = 0`. Returns the last iterate and its defect.
fn newton_krylov(ctx: &WaveContext, start: Profile, opts: &SolveOptions) -> Result<(Profile, usize, f64)> {
    let (phi, its) = newton_iterate(ctx, start, opts)?;
    let err = sup_diff(&am_apply(&phi, ctx)?.values, &phi.values);
    Ok((phi, its, if err.is_finite() { err } else { f64::INFINITY }))
}

fn newton_iterate(ctx: &WaveContext, start: Profile, opts: &SolveOptions) -> Result<(Profile, usize)> {
    // The fixed points of `A_m` do not depend on `b`; a small `b` spreads the
    // low-frequency spectrum of the Jacobian away from 0.
    let ctx = &WaveContext {
        b: NEWTON_B,
        ..ctx.clone()
    };
    let mut phi = start;
    let n = phi.len();
    let h = phi.dt;
    let beta = ctx.beta;
    let hom_left = match left_end(ctx, &phi) {
        LeftEnd::Value(_) => LeftEnd::Value(0.0),
        other => other,
    };
    let eval_f = |p: &Profile| -> Result<Vec<f64>> {
        let a = am_apply(p, ctx)?;
        Ok(p.values.iter().zip(&a.values).map(|(x, y)| x - y).collect())
    };
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sup = |v: &[f64]| v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    let mut zero = phi.clone();
    zero.left_limit = 0.0;
    zero.right_tail = RightTail::Constant(0.0);
    let mut f = eval_f(&phi)?;
    let mut its = 0;
    let mut slow = 0;
    for _ in 0..NEWTON_MAX_ITER {
        let err = sup(&f);
        if !err.is_finite() || err <= 0.1 * opts.tol || slow >= 3 {
            break;
        }
        its += 1;
        let conv = convolve_grid(&ctx.kernel, &phi)?;
        let vals = phi.values.clone();
        let mut w = phi.derivative();
        let wn = norm2(&w).max(f64::MIN_POSITIVE);
        w.iter_mut().for_each(|x| *x /= wn);
        let apply = |v: &[f64], out: &mut [f64]| {
            let mut vp = zero.clone();
            vp.values.copy_from_slice(&v[..n]);
            let kv = convolve_grid(&ctx.kernel, &vp).expect("zero-extended profile covers every shift");
            let mut rhs: Vec<f64> = (0..n)
                .map(|i| {
                    ctx.b * v[i] + dg_beta(vals[i], beta) * v[i] * (1.0 - conv[i]) - g_beta(vals[i], beta) * kv[i]
                })
                .collect();
            let mut scratch = Vec::new();
            green_solve(ctx.c, ctx.b, h, &mut rhs, hom_left, &mut scratch);
            let mut dot = 0.0;
            for i in 0..n {
                out[i] = v[i] - rhs[i] + v[n] * w[i];
                dot += w[i] * v[i];
            }
            out[n] = dot;
        };
        let mut rhs: Vec<f64> = f.iter().map(|x| -x).collect();
        rhs.push(0.0);
        let mut delta = vec![0.0; n + 1];
        let gm = GmresOptions {
            restart: 100,
            max_iter: 400,
            rel_tol: 1e-10,
        };
        match gmres(apply, &rhs, &mut delta, gm) {
            Ok(_) | Err(Error::NoConvergence { .. }) => {}
            Err(e) => return Err(e),
        }
        let f0 = norm2(&f);
        let mut step = 1.0;
        loop {
            let mut trial = phi.clone();
            for (v, d) in trial.values.iter_mut().zip(&delta) {
                *v += step * d;
            }
            let ft = eval_f(&trial)?;
            if norm2(&ft) < (1.0 - 1e-4 * step) * f0 || step < 1e-3 {
                phi = trial;
                f = ft;
                break;
            }
            step *= 0.5;
        }
        slow = if sup(&f) > 0.5 * err { slow + 1 } else { 0 };
    }
    Ok((phi, its))
}

const NEWTON_MAX_ITER: usize = 40;
const NEWTON_B: f64 = 1.0;

/// Newton continuation along `(1 − θ)δ₀ + θK` on the grid of `grid`, starting
/// from the front of the local equation.
fn kernel_homotopy(ctx: &WaveContext, grid: &Profile, opts: &SolveOptions) -> Result<(Profile, usize, f64)> {
    let local_ctx = WaveContext {
        kernel: Kernel::dirac(0.0),
        ..ctx.clone()
    };
    let mut start = kpp_upper_front(&local_ctx)?.resampled(grid.t0, grid.dt, grid.len())?;
    start.left_limit = 0.0;
    start.right_tail = RightTail::Constant(1.0);
    let (mut phi, mut iterations, _, mut err) = solve_core(&local_ctx, start, opts, None, true)?;
    if !(err <= CONTINUATION_TOL) {
        return Err(Error::NoConvergence {
            iterations,
            residual: err,
        });
    }
    let (mut theta, mut step) = (0.0f64, 0.25f64);
    while theta < 1.0 {
        let next = (theta + step).min(1.0);
        let mctx = WaveContext {
            kernel: mix_kernels(&ctx.kernel, next)?,
            ..ctx.clone()
        };
        let (p, its, e) = newton_krylov(&mctx, phi.clone(), opts)?;
        iterations += its;
        if e <= CONTINUATION_TOL.max(10.0 * opts.tol) {
            phi = p;
            err = e;
            theta = next;
            step = (step * 1.5).min(0.25);
        } else if step > 1e-3 {
            step *= 0.5;
        } else {
            return Err(Error::NoConvergence {
                iterations,
                residual: e,
            });
        }
    }
    Ok((phi, iterations, err))
}

fn mix_kernels(k: &Kernel, theta: f64) -> Result<Kernel> {
    let mut atoms: Vec<Atom> = k
        .atoms()
        .iter()
        .map(|a| Atom {
            s: a.s,
            mass: theta * a.mass,
        })
        .collect();
    if theta < 1.0 {
        atoms.push(Atom {
            s: 0.0,
            mass: 1.0 - theta,
        });
    }
    let density = k.density().map(|d| d.scaled(theta));
    Kernel::new(atoms, density)
}

fn finish(
    ctx: &WaveContext,
    phi: Profile,
    iterations: usize,
    method: SolveMethod,
    err: f64,
    lower: Option<LowerParams>,
) -> Result<FrontSolution> {
    let half = phi
        .crossing(0.5)
        .ok_or_else(|| Error::Numeric("front never crosses 1/2".into()))?;
    // Refine the crossing on the interpolant, then move the grid (not the values).
    let (mut a, mut b) = (half - phi.dt, half + phi.dt);
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if phi.eval(m) < 0.5 {
            a = m;
        } else {
            b = m;
        }
    }
    let mut profile = phi.shifted(0.5 * (a + b));
    profile.diagnostics.residual_sup = residual(&profile, ctx.c, &ctx.kernel)?;
    profile.diagnostics.monotone = profile.is_monotone(1e-12);
    let (p, big_p) = measure_extremes(&profile);
    profile.diagnostics.p = p;
    profile.diagnostics.big_p = big_p;
    Ok(FrontSolution {
        profile,
        iterations,
        method,
        fixed_point_error: err,
        lower,
    })
}

/// `(p, P)` from local extrema over the right third of the grid, together with the last value.
pub fn measure_extremes(p: &Profile) -> (f64, f64) {
    let n = p.len();
    let v = &p.values[2 * n / 3..];
    let last = v[v.len() - 1];
    let (mut lo, mut hi) = (last, last);
    for w in v.windows(3) {
        if w[1] > w[0] && w[1] >= w[2] {
            hi = hi.max(w[1]);
        }
        if w[1] < w[0] && w[1] <= w[2] {
            lo = lo.min(w[1]);
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_beta_examples() {
        assert_eq!(g_beta(0.5, 2.0), 0.5);
        assert_eq!(g_beta(3.0, 2.0), 1.0);
        assert_eq!(g_beta(5.0, 2.0), 0.0);
    }

    #[test]
    fn context_identities() {
        let ctx = WaveContext::new(2.5, Kernel::dirac(1.0)).unwrap();
        assert!((ctx.z1 * ctx.z2 + ctx.b).abs() < 1e-12 * ctx.b);
        assert!((ctx.z1 + ctx.z2 - ctx.c).abs() < 1e-12);
        assert!(ctx.beta > ctx.u.value && ctx.b > 2.0 * ctx.beta + 2.0);
        assert!(WaveContext::with_constants(2.5, Kernel::dirac(1.0), 1.0, 100.0).is_err());
    }

    #[test]
    fn upper_front_solves_its_equation() {
        for &c in &[2.0, 2.5, 3.0] {
            let ctx = WaveContext::new(c, Kernel::dirac(0.0)).unwrap();
            let up = UpperFront::new(&ctx);
            for i in 0..400 {
                let t = -30.0 + 0.1 * i as f64;
                let r = up.second_derivative(t) - c * up.derivative(t) + g_beta(up.value(t), ctx.beta);
                assert!(r.abs() < 1e-8 * (1.0 + up.value(t)), "c = {c}, t = {t}, r = {r}");
            }
            let tb = up.t_beta;
            assert!((up.value(tb) - ctx.beta).abs() < 1e-9 * ctx.beta);
            assert!((up.derivative(tb - 1e-12) - up.derivative(tb + 1e-12)).abs() < 1e-7 * ctx.beta);
        }
    }

    #[test]
    fn upper_front_left_normalization() {
        let ctx = WaveContext::new(2.5, Kernel::dirac(0.5)).unwrap();
        let p = kpp_upper_front(&ctx).unwrap();
        let t = p.t0;
        assert!((p.values[0] * (-ctx.lambda * t).exp() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lower_vanishes_past_cutoff() {
        let ctx = WaveContext::new(3.0, Kernel::dirac(0.0)).unwrap();
        let (p, params) = default_lower(&ctx).unwrap();
        let tc = -params.m.ln() / params.eps;
        for i in 0..p.len() {
            if p.t(i) >= tc {
                assert_eq!(p.values[i], 0.0);
            }
        }
        assert!(params.m > params.m_min);
        let ctx2 = WaveContext::new(2.0, Kernel::dirac(0.0)).unwrap();
        assert!(matches!(default_lower(&ctx2), Err(Error::Constraint(_))));
    }

    #[test]
    fn constant_fixed_points() {
        let ctx = WaveContext::new(2.5, Kernel::dirac(-0.5)).unwrap();
        for v in [0.0, 1.0, 2.0 * ctx.beta] {
            let p = Profile::from_fn(-10.0, 0.02, 1001, |_| v, v, RightTail::Constant(v)).unwrap();
            let a = am_apply(&p, &ctx).unwrap();
            assert!(sup_diff(&a.values, &p.values) < 1e-10 * (1.0 + v));
        }
    }

    #[test]
    fn residual_of_constants() {
        let k = Kernel::dirac(1.0);
        for v in [0.0, 1.0] {
            let p = Profile::from_fn(-5.0, 0.1, 101, |_| v, v, RightTail::Constant(v)).unwrap();
            assert_eq!(residual(&p, 2.5, &k).unwrap(), 0.0);
        }
        let p = Profile::from_fn(0.0, 0.1, 4, |_| 1.0, 1.0, RightTail::Constant(1.0)).unwrap();
        assert!(residual(&p, 2.5, &k).is_err());
    }

    #[test]
    fn weighted_norm_examples() {
        let one = Profile::from_fn(-20.0, 0.1, 401, |_| 1.0, 1.0, RightTail::Constant(1.0)).unwrap();
        assert!(weighted_norm(&one, -1.0, 1.0).is_infinite());
        let l = 0.5;
        let capped = Profile::from_fn(-60.0, 0.1, 801, |t| (l * t).exp().min(1.0), 0.0, RightTail::Constant(1.0))
            .unwrap();
        assert!(weighted_norm(&capped, 0.0, l / 2.0).is_finite());
    }
}
