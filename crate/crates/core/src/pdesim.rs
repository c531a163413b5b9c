//! Explicit method-of-lines simulator for `u_t = u_xx + u(1 − K∗u)` on `[0, X]`
//! with zero-flux ends.
//!
//! The convolution is a fixed stencil over cell offsets: an atom at `s` hits
//! `u(x − s)`, read by linear interpolation between the two neighbouring nodes
//! (exact when `s/dx` is an integer). Indices outside the grid are clamped,
//! which extends `u` by its boundary values.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;

pub const DEFAULT_LENGTH: f64 = 400.0;
pub const DEFAULT_DX: f64 = 0.2;
pub const DEFAULT_LEVEL: f64 = 0.5;
/// Largest `dt/dx²` for the explicit diffusion step.
pub const DIFFUSION_LIMIT: f64 = 0.4;
/// Largest `dt·max|1 − K∗u|` for the reaction step.
pub const REACTION_LIMIT: f64 = 0.5;
pub const POSITIVITY_TOL: f64 = 1e-12;
pub const MIN_FRONT_SAMPLES: usize = 20;
const HISTORY_CAPACITY: usize = 100_000;
/// A front closer than this many cells to the right end counts as off-grid.
const EDGE_CELLS: usize = 5;

/// Convolution weights: `(K∗u)_i = Σ w·u[i − d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    taps: Vec<(i64, f64)>,
    identity: bool,
}

impl Stencil {
    pub fn new(kernel: &Kernel, dx: f64) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::Domain(format!("dx must be positive, got {dx}")));
        }
        let mut w: BTreeMap<i64, f64> = BTreeMap::new();
        let mut add = |s: f64, mass: f64| {
            let o = s / dx;
            let r = o.round();
            if (o - r).abs() <= 1e-9 * o.abs().max(1.0) {
                *w.entry(r as i64).or_default() += mass;
            } else {
                let f = o.floor();
                let frac = o - f;
                *w.entry(f as i64).or_default() += mass * (1.0 - frac);
                *w.entry(f as i64 + 1).or_default() += mass * frac;
            }
        };
        for a in kernel.atoms() {
            if a.mass != 0.0 {
                add(a.s, a.mass);
            }
        }
        if let Some(d) = kernel.density() {
            for (i, wt) in d.weights().into_iter().enumerate() {
                let v = d.values()[i];
                if v != 0.0 {
                    add(d.node(i), wt * v);
                }
            }
        }
        let taps: Vec<(i64, f64)> = w.into_iter().filter(|(_, v)| *v != 0.0).collect();
        let identity = taps.len() == 1 && taps[0] == (0, 1.0);
        Ok(Self { taps, identity })
    }

    pub fn taps(&self) -> &[(i64, f64)] {
        &self.taps
    }

    /// True for the local kernel `δ(s)`, where the convolution is skipped.
    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        if self.identity {
            out.copy_from_slice(u);
            return;
        }
        let last = u.len() as i64 - 1;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self
                .taps
                .iter()
                .map(|(d, w)| w * u[(i as i64 - d).clamp(0, last) as usize])
                .sum();
        }
    }
}

/// A recorded front position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontSample {
    pub t: f64,
    /// `None` when `u` does not cross the level away from the right end.
    pub x: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub dx: f64,
    pub u: Vec<f64>,
    pub t: f64,
    pub kernel: Kernel,
    pub stencil: Stencil,
    pub level: f64,
    pub history: VecDeque<FrontSample>,
    /// Smallest value of `u` seen so far.
    pub min_seen: f64,
}

impl SimState {
    pub fn new(kernel: Kernel, dx: f64, u: Vec<f64>) -> Result<Self> {
        if u.len() < 3 {
            return Err(Error::Domain("the grid needs at least three nodes".into()));
        }
        if let Some(v) = u.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!("initial value {v} is negative or not finite")));
        }
        let stencil = Stencil::new(&kernel, dx)?;
        let min_seen = u.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            dx,
            u,
            t: 0.0,
            kernel,
            stencil,
            level: DEFAULT_LEVEL,
            history: VecDeque::new(),
            min_seen,
        })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn length(&self) -> f64 {
        self.x(self.len() - 1)
    }

    pub fn convolution(&self) -> Vec<f64> {
        let mut k = vec![0.0; self.len()];
        self.stencil.apply(&self.u, &mut k);
        k
    }

    /// Largest admissible step for the current state.
    pub fn max_dt(&self) -> f64 {
        let r = self.convolution().iter().map(|k| (1.0 - k).abs()).fold(0.0, f64::max);
        let reaction = if r > 0.0 { REACTION_LIMIT / r } else { f64::INFINITY };
        (DIFFUSION_LIMIT * self.dx * self.dx).min(reaction)
    }

    /// One explicit midpoint step.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let k = self.convolution();
        check_dt(dt, self.dx, &k)?;
        let mut f = vec![0.0; self.len()];
        rhs(&self.u, &k, self.dx, &mut f);
        let half: Vec<f64> = self.u.iter().zip(&f).map(|(u, f)| u + 0.5 * dt * f).collect();
        let mut kh = vec![0.0; self.len()];
        self.stencil.apply(&half, &mut kh);
        rhs(&half, &kh, self.dx, &mut f);
        for (u, f) in self.u.iter_mut().zip(&f) {
            *u += dt * f;
        }
        self.t += dt;
        let lo = self.u.iter().copied().fold(f64::INFINITY, f64::min);
        self.min_seen = self.min_seen.min(lo);
        if let Some(v) = self.u.iter().find(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: self.t, value: *v });
        }
        if lo < -POSITIVITY_TOL {
            return Err(Error::InvariantViolation(format!("u = {lo:e} < 0 at t = {}", self.t)));
        }
        Ok(())
    }

    /// Rightmost crossing of `level`, linearly interpolated between nodes.
    pub fn front_position(&self, level: f64) -> Option<f64> {
        let n = self.len();
        let i = (0..n - 1).rev().find(|&i| self.u[i] >= level && self.u[i + 1] < level)?;
        if i + 1 + EDGE_CELLS >= n {
            return None;
        }
        let (a, b) = (self.u[i], self.u[i + 1]);
        Some(self.x(i) + self.dx * (a - level) / (a - b))
    }

    /// Append the current front position to the history ring.
    pub fn record(&mut self) {
        if self.history.len() == HISTORY_CAPACITY {
            self.history.pop_front();
        }
        let x = self.front_position(self.level);
        self.history.push_back(FrontSample { t: self.t, x });
    }
}

/// The local equation `u_t = u_xx + u(1 − u)` with the same discretization
/// and no convolution; a reference for the simulator with `K = δ(s)`.
pub fn local_reference_step(u: &mut [f64], dx: f64, dt: f64) -> Result<()> {
    check_dt(dt, dx, u)?;
    let mut f = vec![0.0; u.len()];
    rhs(u, u, dx, &mut f);
    let half: Vec<f64> = u.iter().zip(&f).map(|(u, f)| u + 0.5 * dt * f).collect();
    rhs(&half, &half, dx, &mut f);
    for (u, f) in u.iter_mut().zip(&f) {
        *u += dt * f;
    }
    Ok(())
}

fn check_dt(dt: f64, dx: f64, k: &[f64]) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::StepSize(format!("dt must be positive, got {dt}")));
    }
    let diffusion = DIFFUSION_LIMIT * dx * dx;
    if dt > diffusion {
        return Err(Error::StepSize(format!(
            "diffusion stability: dt = {dt} exceeds 0.4·dx² = {diffusion}"
        )));
    }
    let r = k.iter().map(|k| (1.0 - k).abs()).fold(0.0, f64::max);
    if dt * r > REACTION_LIMIT {
        return Err(Error::StepSize(format!(
            "positivity: dt = {dt} exceeds 0.5/max|1 − K∗u| = {}",
            REACTION_LIMIT / r
        )));
    }
    Ok(())
}

/// Central second difference with mirror ghosts, plus `u(1 − k)`.
fn rhs(u: &[f64], k: &[f64], dx: f64, out: &mut [f64]) {
    let n = u.len();
    let h2 = dx * dx;
    for i in 0..n {
        let l = if i == 0 { u[1] } else { u[i - 1] };
        let r = if i + 1 == n { u[n - 2] } else { u[i + 1] };
        out[i] = (l - 2.0 * u[i] + r) / h2 + u[i] * (1.0 - k[i]);
    }
}

/// Least-squares slope of the recorded front positions with `t ≥ skip`.
pub fn front_speed(history: &[FrontSample], skip: f64) -> Result<f64> {
    let used: Vec<&FrontSample> = history.iter().filter(|s| s.t >= skip).collect();
    if let Some(s) = used.iter().find(|s| s.x.is_none()) {
        return Err(Error::Measurement(format!("front is off the grid at t = {}", s.t)));
    }
    let pts: Vec<(f64, f64)> = used.iter().map(|s| (s.t, s.x.unwrap_or_default())).collect();
    if pts.len() < MIN_FRONT_SAMPLES {
        return Err(Error::Measurement(format!(
            "{} front positions after t = {skip}; need at least {MIN_FRONT_SAMPLES}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let (mt, mx) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mt) * (p.1 - mx), a.1 + (p.0 - mt).powi(2)));
    if sxx == 0.0 {
        return Err(Error::Measurement("front positions all recorded at one time".into()));
    }
    Ok(sxy / sxx)
}

/// Initial data on the simulation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialData {
    /// `u = 1` for `x < at`, `0` after.
    Heaviside { at: f64 },
    /// `u = 1` for `x < at`, `e^{−rate(x − at)}` after.
    Ramp { at: f64, rate: f64 },
    Gaussian { center: f64, width: f64, height: f64 },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Ramp { at: 20.0, rate: 5.0 }
    }
}

impl InitialData {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            InitialData::Heaviside { at } => f64::from(u8::from(x < at)),
            InitialData::Ramp { at, rate } => {
                if x < at {
                    1.0
                } else {
                    (-rate * (x - at)).exp()
                }
            }
            InitialData::Gaussian { center, width, height } => {
                let z = (x - center) / width;
                height * (-0.5 * z * z).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            InitialData::Heaviside { at } => at.is_finite(),
            InitialData::Ramp { at, rate } => at.is_finite() && rate > 0.0 && rate.is_finite(),
            InitialData::Gaussian { center, width, height } => {
                center.is_finite() && width > 0.0 && height >= 0.0 && height.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid initial data {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub length: f64,
    pub dx: f64,
    /// Fixed step; `None` picks `0.2·dx²`, capped by the reaction limit.
    pub dt: Option<f64>,
    pub init: InitialData,
    pub t_end: f64,
    /// Interval between stored snapshots; `None` stores only the final state.
    pub snapshot_every: Option<f64>,
    /// Interval between recorded front positions.
    pub record_every: f64,
    pub level: f64,
    /// Positions recorded before this time are ignored by the speed fit;
    /// `None` uses `t_end/2`.
    pub skip: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            length: DEFAULT_LENGTH,
            dx: DEFAULT_DX,
            dt: None,
            init: InitialData::default(),
            t_end: 40.0,
            snapshot_every: None,
            record_every: 0.25,
            level: DEFAULT_LEVEL,
            skip: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    pub t_end: f64,
    pub speed: Option<f64>,
    pub speed_error: Option<String>,
    pub min_value: f64,
    pub max_value: f64,
    pub front: Vec<FrontSample>,
    pub snapshots: Vec<Snapshot>,
}

/// Run the simulator from `opts.init` to `opts.t_end`.
pub fn simulate(kernel: &Kernel, opts: &SimOptions) -> Result<SimReport> {
    opts.init.validate()?;
    if !(opts.length > 0.0) || !(opts.dx > 0.0) || opts.length / opts.dx < 3.0 {
        return Err(Error::Domain(format!("invalid grid: length {}, dx {}", opts.length, opts.dx)));
    }
    if !(opts.t_end > 0.0) || !(opts.record_every > 0.0) {
        return Err(Error::Domain("t_end and record_every must be positive".into()));
    }
    let n = (opts.length / opts.dx).round() as usize + 1;
    let u: Vec<f64> = (0..n).map(|i| opts.init.value(i as f64 * opts.dx)).collect();
    let mut st = SimState::new(kernel.clone(), opts.dx, u)?;
    st.level = opts.level;
    let dt = match opts.dt {
        Some(dt) => dt,
        None => (0.2 * opts.dx * opts.dx).min(0.5 * st.max_dt()),
    };
    let steps = (opts.t_end / dt).ceil() as usize;
    let dt = opts.t_end / steps as f64;
    let record_stride = ((opts.record_every / dt).round() as usize).max(1);
    let snap_stride = opts.snapshot_every.map(|s| ((s / dt).round() as usize).max(1));
    let mut snapshots = vec![Snapshot { t: 0.0, u: st.u.clone() }];
    st.record();
    for k in 1..=steps {
        st.step(dt)?;
        if k % record_stride == 0 || k == steps {
            st.record();
        }
        if snap_stride.is_some_and(|s| k % s == 0) && k != steps {
            snapshots.push(Snapshot { t: st.t, u: st.u.clone() });
        }
    }
    snapshots.push(Snapshot { t: st.t, u: st.u.clone() });
    let front: Vec<FrontSample> = st.history.iter().copied().collect();
    let skip = opts.skip.unwrap_or(0.5 * opts.t_end);
    let (speed, speed_error) = match front_speed(&front, skip) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SimReport {
        dx: opts.dx,
        dt,
        steps,
        t_end: st.t,
        speed,
        speed_error,
        min_value: st.min_seen,
        max_value: st.u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        front,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(n: usize, dx: f64) -> Vec<f64> {
        (0..n).map(|i| 0.1 * (-((i as f64 * dx - 10.0) / 2.0).powi(2)).exp()).collect()
    }

    #[test]
    fn equilibria_are_fixed() {
        for c in [0.0, 1.0] {
            let mut st = SimState::new(Kernel::dirac(1.0), 0.2, vec![c; 50]).unwrap();
            for _ in 0..20 {
                st.step(0.01).unwrap();
            }
            assert!(st.u.iter().all(|&v| v == c));
        }
    }

    #[test]
    fn local_kernel_matches_reference_exactly() {
        let dx = 0.2;
        let mut st = SimState::new(Kernel::dirac(0.0), dx, bump(101, dx)).unwrap();
        assert!(st.stencil.is_identity());
        let mut r = st.u.clone();
        for _ in 0..200 {
            st.step(0.01).unwrap();
            local_reference_step(&mut r, dx, 0.01).unwrap();
            let e = st.u.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(e <= 1e-12);
        }
    }

    #[test]
    fn step_limits_name_the_binding_constraint() {
        let mut st = SimState::new(Kernel::dirac(0.0), 0.2, vec![0.5; 20]).unwrap();
        let e = st.step(0.02).unwrap_err().to_string();
        assert!(e.contains("diffusion"), "{e}");
        let mut st = SimState::new(Kernel::dirac(0.0), 10.0, vec![0.0; 20]).unwrap();
        let e = st.step(1.0).unwrap_err().to_string();
        assert!(e.contains("positivity"), "{e}");
    }

    #[test]
    fn fractional_offsets_split_linearly() {
        let s = Stencil::new(&Kernel::dirac(0.25), 0.1).unwrap();
        assert_eq!(s.taps().len(), 2);
        assert!((s.taps()[0].1 - 0.5).abs() < 1e-12 && (s.taps()[1].1 - 0.5).abs() < 1e-12);
        let s = Stencil::new(&Kernel::dirac(-0.4), 0.2).unwrap();
        assert_eq!(s.taps(), &[(-2, 1.0)]);
    }

    #[test]
    fn convolution_extends_by_boundary_values() {
        let s = Stencil::new(&Kernel::dirac(1.0), 1.0).unwrap();
        let u = [3.0, 1.0, 2.0];
        let mut k = [0.0; 3];
        s.apply(&u, &mut k);
        assert_eq!(k, [3.0, 3.0, 1.0]);
    }

    #[test]
    fn bump_spreads_and_grows() {
        let dx = 0.2;
        let mut st = SimState::new(Kernel::dirac(0.0), dx, bump(201, dx)).unwrap();
        for _ in 0..1000 {
            st.step(0.01).unwrap();
        }
        assert!(st.u[50] > 0.5 && st.u[50] < 1.0);
        assert!(st.min_seen >= 0.0);
    }

    #[test]
    fn speed_needs_enough_samples() {
        let h: Vec<FrontSample> = (0..10).map(|i| FrontSample { t: i as f64, x: Some(2.0 * i as f64) }).collect();
        assert!(matches!(front_speed(&h, 0.0), Err(Error::Measurement(_))));
        let h: Vec<FrontSample> = (0..30).map(|i| FrontSample { t: i as f64, x: Some(1.0 + 2.0 * i as f64) }).collect();
        assert!((front_speed(&h, 0.0).unwrap() - 2.0).abs() < 1e-12);
    }
}
