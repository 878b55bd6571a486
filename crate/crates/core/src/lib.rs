//! Smoothed, L1-regularized maximum rank correlation estimation.
//!
//! The model is `Y = H(X^T beta*, eps)` with an unknown link `H` that is
//! increasing in both arguments. Only the direction of `beta*` is identified,
//! so one coefficient (the anchor) is pinned to 1. The estimator minimizes a
//! smoothed version of the negative Kendall-type concordance between `Y` and
//! `X^T beta` plus an L1 penalty on the free coordinates.

pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod kendall;
pub mod kernels;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod simulate;
pub mod tuning;

pub use data::{make_anchored, pair_stats, AnchoredCoefficients, Dataset, PairStats};
pub use error::{Error, Result};
pub use kernels::{kernel_cdf, kernel_curvature, kernel_pdf, SmoothingKernel};
pub use loss::{
    exact_mrc_objective, hessian_is_psd, penalized_objective, smoothed_gradient, smoothed_hessian,
    smoothed_loss, smoothing_gap_bound,
};
pub use optim::{
    fit_hinge, fit_lasso, fit_rmrce, marginal_kendall_start, soft_threshold, FitConfig, FitResult,
    Method, StartStrategy,
};
