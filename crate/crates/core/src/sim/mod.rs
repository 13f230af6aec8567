//! Single-index model backend.

pub mod design;
pub mod moments;
pub mod wald;

pub use design::{
    link_deriv, link_eval, simulate_sim, simulate_sim_with, simulate_sim_with_errors, ErrorKind, LinkFamily, SimData, SimDesign, SIM_THETA0,
};
pub use moments::{
    conditional_x2_mean, error_score, feasible_moment, local_power_params, oracle_moment, psi_test_sim, LocalPowerParams,
    SimTruth, SIM_MIN_N, SIM_SPLINE_KNOTS, SIM_THRESHOLD,
};
pub use wald::{profile_argmin, wald_test_ichimura, wald_test_with_grid, WaldOutcome, WALD_GRID_POINTS};
