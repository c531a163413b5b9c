//! Wave profiles: the gridded profile type, the fixed-point front solver with
//! its upper and lower solutions, and the closed-form toy-model fronts.

pub mod front;
pub mod profile;
pub mod toy;

pub use front::{
    am_apply, convolve_grid, default_lower, g_beta, kpp_upper_front, lower_solution, measure_extremes, residual,
    residual_values, solve_front, upper_on_grid, weighted_norm, FrontSolution, LowerParams, SolveMethod, SolveOptions, UpperFront,
    WaveContext,
};
pub use profile::{Diagnostics, Profile, RightTail};
pub use toy::{toy_fronts, ToyConstants, ToyFront, ToyFronts};
