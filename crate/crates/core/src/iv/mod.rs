//! Instrumental-variables backend.

pub mod ci;
pub mod data;
pub mod design;
pub mod moments;

pub use ci::{invert_ci, linear_grid, CiResult};
pub use data::{load_csv, write_csv, ColumnMap};
pub use design::{
    simulate_iv, simulate_iv_with, simulate_iv_with_errors, IvData, IvDesign, IvVariant, PiSpec, IV_BETA, IV_THETA0,
};
pub use moments::{
    ar_test, feasible_moment_iv, psi_test_iv, FirstStage, IvScorer, OrderRule, IC_ORDERS, IV_THRESHOLD,
};
