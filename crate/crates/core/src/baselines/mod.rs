//! Comparison methods: importance sampling, per-arm least squares,
//! propensity weighting and input-space IPM weighting.

mod importance;
mod ipm_wnn;
mod ols;
mod propensity;

pub use importance::{clip_weights, gaussian_log_ratio, is_raw_weights, is_weights_gaussian};
pub use ipm_wnn::{input_space_weights, ipm_wnn_fit, InputWeightConfig, IpmWnnFit, STAGE1_STEPS, STAGE1_STEP_SIZE};
pub use ols::{ols_fit, ols_weighted_fit, LinearModel, OLS_RIDGE, OLS_RIDGE_FALLBACK};
pub use propensity::{binary_log_loss, ipw_weights, propensity_fit, PropensityModel, IPW_CLIP, PROPENSITY_L2, PROPENSITY_LR, PROPENSITY_STEPS};
