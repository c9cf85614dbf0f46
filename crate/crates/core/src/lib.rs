//! Variable selection for highly correlated predictors by penalizing
//! semi-standard partial covariances (SPAC) instead of raw coefficients.
//!
//! The partial covariance of covariate `j` is `gamma_j = beta_j / sqrt(d_jj)`,
//! where `d_jj` is the `j`-th diagonal entry of the precision matrix. Fitting
//! in `gamma` and mapping back keeps covariates that matter directly while
//! discounting ones that are merely correlated with them.
//!
//! Modules:
//! * [`data`]: standardization and CSV ingestion.
//! * [`precision`]: estimators of the precision diagonal.
//! * [`penalty`]: Lasso, adaptive Lasso and SCAD penalties and thresholds.
//! * [`solver`]: coordinate descent, paths, BIC tuning.
//! * [`conditions`]: structured covariances and irrepresentable-condition audits.
//! * [`simulation`]: Monte-Carlo harness scoring false negative/positive rates.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod data;
pub mod error;
mod linalg;
pub mod penalty;
pub mod precision;
pub mod simulation;
pub mod solver;

pub use data::{load_csv, standardize, Dataset, ResponseColumn};
pub use error::{Error, Result};
pub use linalg::ols;
pub use penalty::{PenaltyFamily, PenaltySpec};
pub use precision::{PrecisionChoice, PrecisionDiag, PrecisionMethod};
pub use solver::{FitControls, FitSpace, Method, PathFit, PathGrid, SpacFit, TuningOptions};
