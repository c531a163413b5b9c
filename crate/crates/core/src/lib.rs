//! Numerics for traveling waves of the nonlocal KPP-Fisher equation
//! `u_t = u_xx + u(1 - K * u)`.
//!
//! The crate covers the characteristic equations of the wave profile problem,
//! a priori bounds and convergence tests, a fixed-point front solver, the
//! associated delay equation (periodic orbits, Floquet spectra, connections)
//! and an explicit PDE simulator used for cross-checks.

pub mod dde;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod pdesim;
pub mod profiles;
pub mod regimes;
pub mod spectral;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use kernel::{Atom, Kernel, Side};
pub use profiles::{Profile, RightTail, WaveContext};
