//! Interaction kernels: finitely many point masses plus a gridded density.
//!
//! Half-line conventions used throughout: the left half is `s < 0`, the right
//! half is `s >= 0`. An atom sitting exactly at the origin therefore belongs
//! to the right half. For the density part the split point carries no mass.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::Profile;

/// Truncation half-width, in standard deviations, for Gaussian densities.
pub const GAUSSIAN_TRUNCATION: f64 = 8.0;

const NORMALIZATION_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub s: f64,
    pub mass: f64,
}

/// Which part of the real line an integral runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Both,
}

/// Density values on a uniform mesh of offsets, integrated by the trapezoid rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

impl Density {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::InvalidKernel(format!(
                "density grid must be strictly increasing, got [{lo}, {hi}]"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidKernel("density needs at least two nodes".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidKernel(format!("density value {v} is negative or not finite")));
        }
        Ok(Self { lo, hi, values })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The same density multiplied by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lo: self.lo,
            hi: self.hi,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.values.len() {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    /// Trapezoid weights, one per node.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let n = self.values.len();
        (0..n)
            .map(|i| if i == 0 || i + 1 == n { 0.5 * h } else { h })
            .collect()
    }

    /// Trapezoid value of `∫_a^b g(s) K(s) ds`, clipping cells at `a` and `b`
    /// with linear interpolation of the integrand.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G, a: f64, b: f64) -> f64 {
        let a = a.max(self.lo);
        let b = b.min(self.hi);
        if b <= a {
            return 0.0;
        }
        let h = self.spacing();
        let n = self.values.len();
        let first = (((a - self.lo) / h).floor() as usize).min(n - 2);
        let last = (((b - self.lo) / h).ceil() as usize).clamp(first + 1, n - 1);
        let mut sum = 0.0;
        let mut prev_x = self.node(first);
        let mut prev_f = g(prev_x) * self.values[first];
        for i in first + 1..=last {
            let x = self.node(i);
            let f = g(x) * self.values[i];
            let lo = prev_x.max(a);
            let hi = x.min(b);
            if hi > lo {
                let lerp = |y: f64| prev_f + (f - prev_f) * (y - prev_x) / (x - prev_x);
                let (fl, fh) = if lo == prev_x && hi == x {
                    (prev_f, f)
                } else {
                    (lerp(lo), lerp(hi))
                };
                sum += 0.5 * (hi - lo) * (fl + fh);
            }
            prev_x = x;
            prev_f = f;
        }
        sum
    }
}

/// The interaction kernel `K`: atoms plus an optional finitely supported density.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    atoms: Vec<Atom>,
    density: Option<Density>,
    total_mass: f64,
}

impl Kernel {
    pub fn new(atoms: Vec<Atom>, density: Option<Density>) -> Result<Self> {
        for a in &atoms {
            if !a.s.is_finite() || !a.mass.is_finite() || a.mass < 0.0 {
                return Err(Error::InvalidKernel(format!(
                    "atom at s = {} has invalid mass {}",
                    a.s, a.mass
                )));
            }
        }
        let mut k = Self {
            atoms,
            density,
            total_mass: 0.0,
        };
        k.total_mass = k.mass(Side::Both);
        Ok(k)
    }

    /// `δ(s - at)`, already normalized.
    pub fn dirac(at: f64) -> Self {
        Self {
            atoms: vec![Atom { s: at, mass: 1.0 }],
            density: None,
            total_mass: 1.0,
        }
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Result<Self> {
        Self::new(atoms, None)?.normalize()
    }

    /// Normalized uniform density on `[lo, hi]` sampled at `n` nodes.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let d = Density::new(lo, hi, vec![1.0; n])?;
        Self::new(Vec::new(), Some(d))?.normalize()
    }

    /// Gaussian density truncated to `mean ± 8σ` and renormalized.
    pub fn gaussian(mean: f64, sigma: f64, n: usize) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidKernel(format!("gaussian sigma must be positive, got {sigma}")));
        }
        let lo = mean - GAUSSIAN_TRUNCATION * sigma;
        let hi = mean + GAUSSIAN_TRUNCATION * sigma;
        let h = (hi - lo) / (n.max(2) - 1) as f64;
        let values = (0..n.max(2))
            .map(|i| {
                let z = (lo + i as f64 * h - mean) / sigma;
                (-0.5 * z * z).exp()
            })
            .collect();
        Self::new(Vec::new(), Some(Density::new(lo, hi, values)?))?.normalize()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_mass - 1.0).abs() <= NORMALIZATION_SLACK
    }

    /// Rescale so the total mass is one.
    pub fn normalize(&self) -> Result<Kernel> {
        let m = self.total_mass;
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::InvalidKernel(format!("total mass {m} cannot be normalized")));
        }
        if m == 1.0 {
            return Ok(self.clone());
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                s: a.s,
                mass: a.mass / m,
            })
            .collect();
        let density = self.density.as_ref().map(|d| d.scaled(1.0 / m));
        Kernel::new(atoms, density)
    }

    /// Smallest and largest offset carrying mass.
    pub fn support(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in self.atoms.iter().filter(|a| a.mass > 0.0) {
            lo = lo.min(a.s);
            hi = hi.max(a.s);
        }
        if let Some(d) = &self.density {
            lo = lo.min(d.lo);
            hi = hi.max(d.hi);
        }
        if lo > hi {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    /// `max |s|` over the support.
    pub fn support_radius(&self) -> f64 {
        let (lo, hi) = self.support();
        lo.abs().max(hi.abs())
    }

    /// `∫ g(s) K(s) ds` over the requested half-line.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G, side: Side) -> f64 {
        let in_side = |s: f64| match side {
            Side::Left => s < 0.0,
            Side::Right => s >= 0.0,
            Side::Both => true,
        };
        let mut sum: f64 = self
            .atoms
            .iter()
            .filter(|a| in_side(a.s))
            .map(|a| a.mass * g(a.s))
            .sum();
        if let Some(d) = &self.density {
            let (a, b) = match side {
                Side::Left => (f64::NEG_INFINITY, 0.0),
                Side::Right => (0.0, f64::INFINITY),
                Side::Both => (f64::NEG_INFINITY, f64::INFINITY),
            };
            sum += d.integrate(&g, a, b);
        }
        sum
    }

    pub fn mass(&self, side: Side) -> f64 {
        self.integrate(|_| 1.0, side)
    }

    /// Mass on the closed interval `[a, b]`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|at| at.s >= a && at.s <= b)
            .map(|at| at.mass)
            .sum();
        atoms + self.density.as_ref().map_or(0.0, |d| d.integrate(|_| 1.0, a, b))
    }

    /// `∫ e^{rate·s} K(s) ds` over a half-line or all of ℝ; overflow yields `+∞`.
    pub fn exp_moment(&self, rate: f64, side: Side) -> f64 {
        let v = self.integrate(|s| (rate * s).exp(), side);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    /// `∫_{s<0} |s| K(s) ds`.
    pub fn left_abs_moment(&self) -> f64 {
        self.integrate(|s| s.abs(), Side::Left)
    }

    /// `∫_{s>0} s K(s) ds`.
    pub fn right_moment(&self) -> f64 {
        self.integrate(|s| s, Side::Right)
    }

    pub fn second_moment(&self) -> f64 {
        self.integrate(|s| s * s, Side::Both)
    }

    /// Right-neighbour (advanced) intensity `α₊ = (1/c) ∫_{s<0} |s| K`.
    pub fn alpha_plus(&self, c: f64) -> Result<f64> {
        check_speed(c)?;
        Ok(self.left_abs_moment() / c)
    }

    /// Left-neighbour (delayed) intensity `α₋ = (1/c) ∫_{s>0} s K`.
    pub fn alpha_minus(&self, c: f64) -> Result<f64> {
        check_speed(c)?;
        Ok(self.right_moment() / c)
    }

    /// `∫ K(y) φ(t - y) dy` for an arbitrary callable `φ`.
    pub fn convolve_with<F>(&self, phi: F, t: f64) -> Result<f64>
    where
        F: Fn(f64) -> Result<f64>,
    {
        let mut sum = 0.0;
        for a in &self.atoms {
            if a.mass != 0.0 {
                sum += a.mass * phi(t - a.s)?;
            }
        }
        if let Some(d) = &self.density {
            for (i, w) in d.weights().into_iter().enumerate() {
                let kv = d.values[i];
                if kv != 0.0 {
                    sum += w * kv * phi(t - d.node(i))?;
                }
            }
        }
        Ok(sum)
    }
}

fn check_speed(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("speed must be positive, got {c}")))
    }
}

/// `(K ∗ φ)(t)` with `φ` evaluated by cubic interpolation on its grid and
/// extended by its declared limits outside the grid.
pub fn convolve(k: &Kernel, p: &Profile, t: f64) -> Result<f64> {
    k.convolve_with(|x| p.value(x), t)
}

/// On-disk description of a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct KernelSpec {
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    Gaussian,
    Uniform,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub kind: DensityKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

/// A loaded kernel together with the mass it had before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedKernel {
    pub kernel: Kernel,
    pub raw_mass: f64,
}

impl KernelSpec {
    pub fn build(&self) -> Result<LoadedKernel> {
        let density = match &self.density {
            None => None,
            Some(d) => Some(d.build()?),
        };
        let raw = Kernel::new(self.atoms.clone(), density)?;
        let raw_mass = raw.total_mass();
        Ok(LoadedKernel {
            kernel: raw.normalize()?,
            raw_mass,
        })
    }
}

impl DensitySpec {
    fn build(&self) -> Result<Density> {
        match self.kind {
            DensityKind::Uniform => Density::new(self.lo, self.hi, vec![1.0; self.n.max(2)]),
            DensityKind::Gaussian => {
                let mean = self.params.get("mean").copied().unwrap_or(0.0);
                let sigma = self.params.get("sigma").copied().unwrap_or(1.0);
                if !(sigma > 0.0) {
                    return Err(Error::InvalidKernel(format!("gaussian sigma {sigma} must be positive")));
                }
                let n = self.n.max(2);
                let h = (self.hi - self.lo) / (n - 1) as f64;
                let values = (0..n)
                    .map(|i| {
                        let z = (self.lo + i as f64 * h - mean) / sigma;
                        (-0.5 * z * z).exp()
                    })
                    .collect();
                Density::new(self.lo, self.hi, values)
            }
            DensityKind::Table => {
                let values = self
                    .values
                    .clone()
                    .ok_or_else(|| Error::InvalidKernel("table density requires values".into()))?;
                if self.n != 0 && self.n != values.len() {
                    return Err(Error::InvalidKernel(format!(
                        "table density declares n = {} but has {} values",
                        self.n,
                        values.len()
                    )));
                }
                Density::new(self.lo, self.hi, values)
            }
        }
    }
}
