//! Shared statistical primitives: standardization, least squares,
//! collinearity and influence diagnostics, and correlation significance.

mod correlation;
pub mod dist;
mod matrix;
mod regression;
mod validation;

pub use correlation::{correlation_p_value, pearson, Pearson};
pub use matrix::{zscore, zscore_vec, DataMatrix};
pub use regression::{cooks_distance, ols, vif, InfluenceReport, OlsFit, INTERCEPT};
pub use validation::{state_month_key, validate_against_survey, StateMonth, ValidationReport};
