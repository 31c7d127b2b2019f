//! Per-sample positive weights with a mean-one contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly positive, finite weights whose mean is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

/// Tolerance on the mean-one contract.
pub const MEAN_TOLERANCE: f64 = 1e-9;

impl WeightVector {
    /// Normalize positive raw values by their mean.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        check_positive(&raw)?;
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        Ok(Self(raw.into_iter().map(|v| v / mean).collect()))
    }

    /// Normalize to mean one separately within each group (e.g. treatment
    /// arm). The overall mean is then one as well.
    pub fn from_raw_grouped(raw: Vec<f64>, groups: &[usize]) -> Result<Self> {
        check_positive(&raw)?;
        if groups.len() != raw.len() {
            return Err(Error::InvalidWeights(format!(
                "{} weights but {} group labels",
                raw.len(),
                groups.len()
            )));
        }
        let k = groups.iter().copied().max().map_or(0, |g| g + 1);
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&v, &g) in raw.iter().zip(groups) {
            sums[g] += v;
            counts[g] += 1;
        }
        let out = raw
            .iter()
            .zip(groups)
            .map(|(&v, &g)| v * counts[g] as f64 / sums[g])
            .collect();
        Ok(Self(out))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    /// Wrap values that already satisfy the contract; checked.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let w = Self(values);
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive(&self.0)?;
        let mean = self.mean();
        if (mean - 1.0).abs() > MEAN_TOLERANCE {
            return Err(Error::InvalidWeights(format!("mean is {mean}, expected 1")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Gradient with respect to the raw values given the gradient with respect
/// to `w = raw / mean(raw)`, where each group is normalized separately:
/// `∂L/∂rawⱼ = (gⱼ − (1/k) Σᵢ gᵢwᵢ) / mean(raw)` over the group of size `k`.
pub fn mean_normalization_backward(raw: &[f64], w: &[f64], grad_w: &[f64], groups: &[Vec<usize>]) -> Vec<f64> {
    let mut grad_raw = vec![0.0; raw.len()];
    for idx in groups {
        let k = idx.len() as f64;
        let mean_raw = idx.iter().map(|&i| raw[i]).sum::<f64>() / k;
        let gw = idx.iter().map(|&i| grad_w[i] * w[i]).sum::<f64>() / k;
        for &i in idx {
            grad_raw[i] = (grad_w[i] - gw) / mean_raw;
        }
    }
    grad_raw
}

/// Non-empty, finite and strictly positive.
pub fn check_positive(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::InvalidWeights("empty weight vector".into()));
    }
    if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidWeights(format!("weight {i} is {v}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_is_scale_invariant() {
        let a = WeightVector::from_raw(vec![1.0, 2.0, 5.0]).unwrap();
        let b = WeightVector::from_raw(vec![2.0, 4.0, 10.0]).unwrap();
        assert_eq!(a, b);
        assert!((a.mean() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grouped_normalization_gives_unit_mean_per_group() {
        let w = WeightVector::from_raw_grouped(vec![1.0, 3.0, 10.0, 10.0, 40.0], &[0, 0, 1, 1, 1]).unwrap();
        assert!((w.values()[0] + w.values()[1] - 2.0).abs() < 1e-12);
        assert!((w.values()[2..].iter().sum::<f64>() - 3.0).abs() < 1e-12);
        w.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        assert!(WeightVector::from_raw(vec![]).is_err());
        assert!(WeightVector::from_raw(vec![1.0, 0.0]).is_err());
        assert!(WeightVector::from_raw(vec![1.0, f64::NAN]).is_err());
        assert!(WeightVector::new(vec![2.0, 2.0]).is_err());
    }

    #[test]
    fn normalization_backward_matches_finite_differences() {
        let raw = [0.5, 1.5, 2.0, 0.3, 0.9];
        let c = [1.0, -2.0, 0.5, 3.0, -1.0];
        let groups = vec![vec![0, 2, 4], vec![1, 3]];
        let labels = [0, 1, 0, 1, 0];
        let loss = |r: &[f64]| {
            let w = WeightVector::from_raw_grouped(r.to_vec(), &labels).unwrap();
            w.values().iter().zip(&c).map(|(w, c)| w * c).sum::<f64>()
        };
        let w = WeightVector::from_raw_grouped(raw.to_vec(), &labels).unwrap();
        let analytic = mean_normalization_backward(&raw, w.values(), &c, &groups);
        let err = crate::nn::grad_check(loss, &raw, &analytic, 1e-6);
        assert!(err < 1e-6, "{err}");
    }
}
