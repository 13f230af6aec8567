//! Locally regular C(α)-style hypothesis tests for semiparametric models.
//!
//! The [`engine`] module implements the model-agnostic test: given per
//! observation moment evaluations it forms the quadratic-form statistic with
//! an eigenvalue-thresholded inverse covariance and compares it against a χ²
//! critical value whose degrees of freedom equal the estimated rank. The
//! [`sim`] and [`iv`] modules supply moment functions for the single-index
//! and instrumental-variables models, together with the comparators and data
//! generating processes used in the simulation studies.

pub mod engine;
pub mod error;
pub mod iv;
pub mod mc;
pub mod nonparam;
pub mod numerics;
pub mod sim;

pub use error::{Error, Result};
