//! Metrics for the treatment-effect and domain-adaptation experiments.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::predictor::OutcomeModel;

use super::data::{CateDataset, TargetSample};

/// Treatment-effect metrics on a set of rows.
///
/// `target_risk` is the mean over `t ∈ {0, 1}` of the RMSE of `f(x, t)`
/// against `mu_t(x)`, i.e. the average error under the two constant
/// policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CateMetrics {
    pub rmse_tau: f64,
    pub target_risk: f64,
    pub risk_arm0: f64,
    pub risk_arm1: f64,
}

fn ground_truth(data: &CateDataset) -> Result<(&[f64], &[f64])> {
    match (&data.mu0, &data.mu1) {
        (Some(m0), Some(m1)) => Ok((m0, m1)),
        _ => Err(Error::InvalidArgument("evaluation needs mu0 and mu1".into())),
    }
}

fn check_rows(rows: &[usize], n: usize) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no evaluation rows".into()));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= n) {
        return Err(Error::InvalidArgument(format!("row {r} out of range for {n} rows")));
    }
    Ok(())
}

fn mean_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

struct ArmPredictions {
    f0: Vec<f64>,
    f1: Vec<f64>,
    m0: Vec<f64>,
    m1: Vec<f64>,
}

fn arm_predictions(model: &dyn OutcomeModel, data: &CateDataset, rows: &[usize]) -> Result<ArmPredictions> {
    let (m0, m1) = ground_truth(data)?;
    check_rows(rows, data.len())?;
    if model.arms() != 2 {
        return Err(Error::InvalidArgument(format!("expected a two-arm model, got {} arms", model.arms())));
    }
    let x = data.x.select_rows(rows);
    Ok(ArmPredictions {
        f0: model.predict_arm(&x, 0)?,
        f1: model.predict_arm(&x, 1)?,
        m0: rows.iter().map(|&i| m0[i]).collect(),
        m1: rows.iter().map(|&i| m1[i]).collect(),
    })
}

pub fn eval_cate(model: &dyn OutcomeModel, data: &CateDataset, rows: &[usize]) -> Result<CateMetrics> {
    let p = arm_predictions(model, data, rows)?;
    let tau_hat: Vec<f64> = p.f1.iter().zip(&p.f0).map(|(a, b)| a - b).collect();
    let tau: Vec<f64> = p.m1.iter().zip(&p.m0).map(|(a, b)| a - b).collect();
    let risk_arm0 = mean_sq(&p.f0, &p.m0).sqrt();
    let risk_arm1 = mean_sq(&p.f1, &p.m1).sqrt();
    let m = CateMetrics {
        rmse_tau: mean_sq(&tau_hat, &tau).sqrt(),
        target_risk: 0.5 * (risk_arm0 + risk_arm1),
        risk_arm0,
        risk_arm1,
    };
    if !(m.rmse_tau.is_finite() && m.target_risk.is_finite()) {
        return Err(Error::NumericalAbort {
            epoch: 0,
            step: 0,
            detail: "non-finite evaluation metric".into(),
        });
    }
    Ok(m)
}

/// RMSE against the hidden target outcomes.
pub fn eval_da(model: &dyn OutcomeModel, target: &TargetSample) -> Result<f64> {
    let y = target
        .hidden_outcomes_for_evaluation()
        .ok_or_else(|| Error::InvalidArgument("target sample has no hidden outcomes".into()))?;
    let pred = model.predict(&target.x, &target.t)?;
    Ok(mean_sq(&pred, y).sqrt())
}

/// Both sides of `MSE(τ̂) ≤ 2(R_π1 + R_π0)` with the noise term dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prop1Check {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub const PROP1_SLACK: f64 = 1e-9;

pub fn prop1_check(model: &dyn OutcomeModel, data: &CateDataset) -> Result<Prop1Check> {
    let rows: Vec<usize> = (0..data.len()).collect();
    let p = arm_predictions(model, data, &rows)?;
    let lhs = p
        .f1
        .iter()
        .zip(&p.f0)
        .zip(p.m1.iter().zip(&p.m0))
        .map(|((f1, f0), (m1, m0))| ((f1 - f0) - (m1 - m0)).powi(2))
        .sum::<f64>()
        / rows.len() as f64;
    let rhs = 2.0 * (mean_sq(&p.f1, &p.m1) + mean_sq(&p.f0, &p.m0));
    Ok(Prop1Check {
        lhs,
        rhs,
        holds: lhs <= rhs + PROP1_SLACK,
    })
}

/// Mean and standard error (sample standard deviation over `√k`).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}
