//! Logistic-regression propensities and inverse-propensity weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sigmoid, Activation, AdamConfig, AdamState, Layer, Mlp};
use crate::numerics::Matrix;
use crate::weights::WeightVector;

pub const PROPENSITY_STEPS: usize = 2000;
pub const PROPENSITY_LR: f64 = 1e-2;
pub const PROPENSITY_L2: f64 = 1e-4;
/// Bounds on `u_t / p̂(t | x)` before normalization.
pub const IPW_CLIP: (f64, f64) = (1e-3, 1e3);
/// Predicted probabilities are kept this far from 0 and 1.
const PROB_EPS: f64 = 1e-12;

/// `p̂(t = 1 | x) = σ(xᵀβ + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl PropensityModel {
    /// Treatment probabilities, strictly inside (0, 1).
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.coef.len() {
            return Err(Error::Shape {
                op: "propensity",
                left: x.shape(),
                right: (self.coef.len(), 1),
            });
        }
        Ok((0..x.rows())
            .map(|i| {
                let z: f64 = x.row(i).iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>() + self.intercept;
                sigmoid(z).clamp(PROB_EPS, 1.0 - PROB_EPS)
            })
            .collect())
    }

    /// Mean negative log-likelihood of binary treatments.
    pub fn log_loss(&self, x: &Matrix, t: &[usize]) -> Result<f64> {
        let p = self.predict_proba(x)?;
        Ok(binary_log_loss(&p, t))
    }
}

pub fn binary_log_loss(p: &[f64], t: &[usize]) -> f64 {
    -p.iter()
        .zip(t)
        .map(|(p, &t)| if t == 1 { p.ln() } else { (1.0 - p).ln() })
        .sum::<f64>()
        / p.len() as f64
}

fn check_binary(t: &[usize]) -> Result<(usize, usize)> {
    if let Some(bad) = t.iter().find(|&&a| a > 1) {
        return Err(Error::InvalidArgument(format!("propensities need binary arms, found arm {bad}")));
    }
    let treated = t.iter().filter(|&&a| a == 1).count();
    let control = t.len() - treated;
    if treated == 0 || control == 0 {
        return Err(Error::InvalidArgument("propensities need both arms present".into()));
    }
    Ok((control, treated))
}

/// Logistic regression by full-batch ADAM on the mean log-loss plus
/// `λ‖β‖²`, starting from zero.
pub fn propensity_fit(x: &Matrix, t: &[usize]) -> Result<PropensityModel> {
    if t.len() != x.rows() {
        return Err(Error::InvalidArgument(format!("{} arms for {} rows", t.len(), x.rows())));
    }
    check_binary(t)?;
    let d = x.cols();
    let layer = Layer {
        weight: Matrix::zeros(d, 1),
        bias: vec![0.0],
        activation: Activation::Linear,
    };
    let mut net = Mlp::from_layers(d, vec![layer])?;
    let mut opt = AdamState::new(&net, AdamConfig::with_lr(PROPENSITY_LR));
    let n = x.rows() as f64;
    for _ in 0..PROPENSITY_STEPS {
        let (logits, cache) = net.forward(x)?;
        let grad: Vec<f64> = logits.data().iter().zip(t).map(|(&z, &a)| (sigmoid(z) - a as f64) / n).collect();
        let (mut g, _) = net.backward(&cache, &Matrix::column(&grad))?;
        g.add_assign(&net.weight_sq_norm_grad(PROPENSITY_L2))?;
        opt.step(&mut net, &g)?;
    }
    let l = &net.layers()[0];
    Ok(PropensityModel {
        coef: l.weight.data().to_vec(),
        intercept: l.bias[0],
    })
}

/// Stabilized inverse-propensity weights `u_t / p̂(t | x)`, clipped to
/// `[1e−3, 1e3]` and mean-normalized within each arm.
pub fn ipw_weights(pm: &PropensityModel, x: &Matrix, t: &[usize]) -> Result<WeightVector> {
    if t.len() != x.rows() {
        return Err(Error::InvalidArgument(format!("{} arms for {} rows", t.len(), x.rows())));
    }
    let (control, treated) = check_binary(t)?;
    let n = t.len() as f64;
    let u = [control as f64 / n, treated as f64 / n];
    let p1 = pm.predict_proba(x)?;
    let raw = p1
        .iter()
        .zip(t)
        .map(|(&p, &a)| {
            let pt = if a == 1 { p } else { 1.0 - p };
            (u[a] / pt).clamp(IPW_CLIP.0, IPW_CLIP.1)
        })
        .collect();
    WeightVector::from_raw_grouped(raw, t)
}
