//! Probability distributions and symmetric-matrix linear algebra.

pub mod dist;
pub mod linalg;

pub use dist::{
    chi2_cdf, chi2_quantile, chi2_sf, noncentral_chi2_cdf, normal_cdf, normal_quantile, normal_sf,
};
pub use linalg::{sym_eigen, threshold_pinv, EigenDecomposition, RegularizedInverse, SymmetricMatrix};
