//! Importance-sampling weights for unit-covariance Gaussian designs.

use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};
use crate::weights::WeightVector;

/// Smallest raw weight kept after exponentiation, so extreme points never
/// underflow to zero.
const MIN_RAW: f64 = 1e-300;

/// `log p_π(x) − log p_μ(x)` for `N(m_μ, I)` and `N(m_π, I)`:
/// `xᵀ(m_π − m_μ) + (‖m_μ‖² − ‖m_π‖²)/2`.
pub fn gaussian_log_ratio(x: &[f64], m_mu: &[f64], m_pi: &[f64]) -> f64 {
    let shift: f64 = x.iter().zip(m_mu.iter().zip(m_pi)).map(|(x, (a, b))| x * (b - a)).sum();
    shift + 0.5 * (dot(m_mu, m_mu) - dot(m_pi, m_pi))
}

fn check_means(x: &Matrix, m_mu: &[f64], m_pi: &[f64]) -> Result<()> {
    if m_mu.len() != x.cols() || m_pi.len() != x.cols() {
        return Err(Error::InvalidArgument(format!(
            "means of length {} and {} for {}-dimensional inputs",
            m_mu.len(),
            m_pi.len(),
            x.cols()
        )));
    }
    Ok(())
}

/// Unnormalized density ratios `p_π(xᵢ)/p_μ(xᵢ)`.
pub fn is_raw_weights(x: &Matrix, m_mu: &[f64], m_pi: &[f64]) -> Result<Vec<f64>> {
    check_means(x, m_mu, m_pi)?;
    Ok((0..x.rows())
        .map(|i| gaussian_log_ratio(x.row(i), m_mu, m_pi).exp().max(MIN_RAW))
        .collect())
}

/// Exact importance weights, mean-normalized over the sample. The
/// normalization is done in log space so large dimensions do not overflow.
pub fn is_weights_gaussian(x: &Matrix, m_mu: &[f64], m_pi: &[f64]) -> Result<WeightVector> {
    check_means(x, m_mu, m_pi)?;
    let logs: Vec<f64> = (0..x.rows()).map(|i| gaussian_log_ratio(x.row(i), m_mu, m_pi)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    WeightVector::from_raw(logs.iter().map(|l| (l - top).exp().max(MIN_RAW)).collect())
}

/// `min(wᵢ, M)` on raw weights, then mean-normalized.
pub fn clip_weights(raw: &[f64], max: f64) -> Result<WeightVector> {
    if !(max > 0.0) {
        return Err(Error::InvalidArgument(format!("clip bound must be positive, got {max}")));
    }
    WeightVector::from_raw(raw.iter().map(|w| w.min(max)).collect())
}
