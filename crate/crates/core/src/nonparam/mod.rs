//! Nonparametric regression primitives shared by the model backends.

pub mod series;
pub mod spline;

pub use series::{
    basis_size, fit_series_loo, fit_series_split, information_criterion, information_criterion_design,
    legendre_design, loo_from_design, select_order_ic,
    InformationCriterion, LooFits, NormalizationBox, SeriesFit,
};
pub use spline::{
    eval_spline, eval_spline_deriv, fit_smoothing_spline, fit_smoothing_spline_with_penalty, SplineFit,
};
