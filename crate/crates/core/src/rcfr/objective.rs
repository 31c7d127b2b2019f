//! The split training objective.
//!
//! The h/Φ objective is `risk_w + α·IPM_w + (λ_h/√n)·‖heads‖²` with the
//! weights frozen; the w objective is `α·IPM_w + λ_w·‖w‖₂/n` with the
//! representation frozen. With several arms the IPM is
//! `Σ_t u_t · MMD²(w-weighted Φ(x | t), uniform Φ(target))`, `u_t` the arm
//! fraction of the batch.

use crate::error::{Error, Result};
use crate::experiments::SourceSample;
use crate::ipm::{weighted_mmd2, weighted_mmd2_value, KernelConfig, WeightedMmd};
use crate::nn::Gradients;
use crate::numerics::Matrix;
use crate::weights::{check_positive, mean_normalization_backward, WeightVector};

use super::config::WeightNormalization;
use super::model::RcfrModel;

fn check_batch_weights(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::InvalidWeights(format!("{} weights for {n} samples", w.len())));
    }
    check_positive(w)
}

/// `(1/n) Σ wᵢ (f(xᵢ, tᵢ) − yᵢ)²`.
pub fn weighted_factual_risk(model: &RcfrModel, x: &Matrix, t: &[usize], y: &[f64], w: &WeightVector) -> Result<f64> {
    if y.len() != x.rows() {
        return Err(Error::InvalidArgument(format!("{} outcomes for {} rows", y.len(), x.rows())));
    }
    check_batch_weights(w.values(), x.rows())?;
    let pred = model.predict(x, t)?;
    Ok(weighted_sq_error(&pred, y, w.values()))
}

pub(crate) fn weighted_sq_error(pred: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let n = pred.len() as f64;
    pred.iter()
        .zip(y)
        .zip(w)
        .map(|((p, y), w)| w * (p - y) * (p - y))
        .sum::<f64>()
        / n
}

/// Row indices per arm together with the arm's batch fraction, skipping
/// empty arms.
fn arm_groups(t: &[usize], arms: usize) -> Vec<(Vec<usize>, f64)> {
    let n = t.len() as f64;
    (0..arms.max(1))
        .filter_map(|a| {
            let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] == a).collect();
            (!idx.is_empty()).then(|| {
                let u = idx.len() as f64 / n;
                (idx, u)
            })
        })
        .collect()
}

/// Balancing IPM value and its coordinate gradients.
pub(crate) struct Balance {
    pub value: f64,
    pub grad_src: Matrix,
    pub grad_tgt: Matrix,
}

pub(crate) fn balancing_ipm(z_src: &Matrix, t: &[usize], w: &[f64], z_tgt: &Matrix, arms: usize, kernel: &KernelConfig) -> Result<Balance> {
    let mut grad_src = Matrix::zeros(z_src.rows(), z_src.cols());
    let mut grad_tgt = Matrix::zeros(z_tgt.rows(), z_tgt.cols());
    let mut value = 0.0;
    for (idx, u) in arm_groups(t, arms) {
        let sub_w: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
        let r = weighted_mmd2(&z_src.select_rows(&idx), &sub_w, z_tgt, kernel)?;
        value += u * r.value;
        for (k, &i) in idx.iter().enumerate() {
            for (g, v) in grad_src.row_mut(i).iter_mut().zip(r.grad_src.row(k)) {
                *g += u * v;
            }
        }
        for (g, v) in grad_tgt.data_mut().iter_mut().zip(r.grad_tgt.data()) {
            *g += u * v;
        }
    }
    Ok(Balance { value, grad_src, grad_tgt })
}

pub fn balancing_ipm_value(z_src: &Matrix, t: &[usize], w: &[f64], z_tgt: &Matrix, arms: usize, kernel: &KernelConfig) -> Result<f64> {
    let mut value = 0.0;
    for (idx, u) in arm_groups(t, arms) {
        let sub_w: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
        value += u * weighted_mmd2_value(&z_src.select_rows(&idx), &sub_w, z_tgt, kernel)?;
    }
    Ok(value)
}

#[derive(Debug, Clone)]
pub struct HPhiOutput {
    pub value: f64,
    pub risk: f64,
    pub ipm: f64,
    pub head_penalty: f64,
    /// `(f(xᵢ,tᵢ) − yᵢ)²` per batch row.
    pub per_sample_loss: Vec<f64>,
    pub rep_grads: Gradients,
    pub head_grads: Vec<Gradients>,
}

/// h/Φ objective on a batch with frozen weights `w`. No gradient reaches the
/// weight network.
pub fn objective_h_phi(
    model: &RcfrModel,
    batch: &SourceSample,
    target_x: &Matrix,
    w: &WeightVector,
    kernel: &KernelConfig,
    alpha: f64,
    lambda_h: f64,
) -> Result<HPhiOutput> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    check_batch_weights(w.values(), n)?;
    let w = w.values();
    let src = model.rep_forward(&batch.x)?;
    let heads = model.heads_forward(&src.z, &batch.t)?;

    let nf = n as f64;
    let per_sample_loss: Vec<f64> = heads.pred.iter().zip(&batch.y).map(|(p, y)| (p - y) * (p - y)).collect();
    let risk = per_sample_loss.iter().zip(w).map(|(l, w)| w * l).sum::<f64>() / nf;
    let grad_pred: Vec<f64> = heads
        .pred
        .iter()
        .zip(&batch.y)
        .zip(w)
        .map(|((p, y), w)| 2.0 * w * (p - y) / nf)
        .collect();
    let (mut head_grads, mut grad_z) = model.heads_backward(&heads, &grad_pred, model.rep_dim())?;

    let reg_scale = lambda_h / nf.sqrt();
    let head_penalty = reg_scale * model.head_sq_norm();
    if reg_scale != 0.0 {
        for (g, h) in head_grads.iter_mut().zip(&model.heads) {
            g.add_assign(&h.weight_sq_norm_grad(reg_scale))?;
        }
    }

    let arms = model.arm_count();
    let mut ipm = 0.0;
    let mut rep_grads = Gradients::zeros_like(&model.rep_net);
    if alpha != 0.0 {
        let tgt = model.rep_forward(target_x)?;
        if model.rep_net.is_identity() {
            ipm = balancing_ipm_value(&src.z, &batch.t, w, &tgt.z, arms, kernel)?;
        } else {
            let bal = balancing_ipm(&src.z, &batch.t, w, &tgt.z, arms, kernel)?;
            ipm = bal.value;
            grad_z.add_assign(&bal.grad_src.scale(alpha))?;
            rep_grads = model.rep_backward(&tgt, &bal.grad_tgt.scale(alpha))?;
        }
    }
    if !model.rep_net.is_identity() {
        rep_grads.add_assign(&model.rep_backward(&src, &grad_z)?)?;
    }

    Ok(HPhiOutput {
        value: risk + alpha * ipm + head_penalty,
        risk,
        ipm,
        head_penalty,
        per_sample_loss,
        rep_grads,
        head_grads,
    })
}

#[derive(Debug, Clone)]
pub struct WOutput {
    pub value: f64,
    pub ipm: f64,
    pub norm_term: f64,
    pub weights: WeightVector,
    pub grads: Gradients,
}

/// The w objective for a frozen representation. Gram terms are computed once
/// so repeated weight-net updates on the same batch are cheap.
#[derive(Debug, Clone)]
pub struct WObjective {
    input: Matrix,
    t: Vec<usize>,
    groups: Vec<(Vec<usize>, WeightedMmd, f64)>,
}

impl WObjective {
    pub fn new(model: &RcfrModel, z_src: &Matrix, t: &[usize], z_tgt: &Matrix, kernel: &KernelConfig) -> Result<Self> {
        if z_src.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let groups = arm_groups(t, model.arm_count())
            .into_iter()
            .map(|(idx, u)| Ok((idx.clone(), WeightedMmd::new(&z_src.select_rows(&idx), z_tgt, kernel)?, u)))
            .collect::<Result<_>>()?;
        Ok(Self {
            input: model.weight_input(z_src, t)?,
            t: t.to_vec(),
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn arms(&self) -> &[usize] {
        &self.t
    }

    pub fn eval(&self, model: &RcfrModel, alpha: f64, lambda_w: f64) -> Result<WOutput> {
        let n = self.t.len();
        let nf = n as f64;
        let (out, cache) = model.weight_net.forward(&self.input)?;
        let raw: Vec<f64> = out.data().iter().map(|v| v + super::model::WEIGHT_FLOOR).collect();
        let weights = model.normalize_weights(raw.clone(), &self.t)?;
        let w = weights.values();

        let mut grad_w = vec![0.0; n];
        let mut ipm = 0.0;
        for (idx, mmd, u) in &self.groups {
            let sub: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
            let (v, g) = mmd.eval(&sub)?;
            ipm += u * v;
            for (&i, gi) in idx.iter().zip(g) {
                grad_w[i] += alpha * u * gi;
            }
        }
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm_term = lambda_w * norm / nf;
        if lambda_w != 0.0 {
            for (g, wi) in grad_w.iter_mut().zip(w) {
                *g += lambda_w * wi / (norm * nf);
            }
        }

        // back through w = raw / mean(raw) within each normalization group
        let per_arm = model.weight_normalization == WeightNormalization::PerArm && model.arm_count() > 1;
        let norm_groups: Vec<Vec<usize>> = if per_arm {
            arm_groups(&self.t, model.arm_count()).into_iter().map(|(idx, _)| idx).collect()
        } else {
            vec![(0..n).collect()]
        };
        let grad_raw = mean_normalization_backward(&raw, w, &grad_w, &norm_groups);
        let (grads, _) = model.weight_net.backward(&cache, &Matrix::column(&grad_raw))?;

        Ok(WOutput {
            value: alpha * ipm + norm_term,
            ipm,
            norm_term,
            weights,
            grads,
        })
    }
}

/// w objective on a batch; the representation is treated as constant.
pub fn objective_w(model: &RcfrModel, batch: &SourceSample, target_x: &Matrix, kernel: &KernelConfig, alpha: f64, lambda_w: f64) -> Result<WOutput> {
    let z_src = model.representation(&batch.x)?;
    let z_tgt = model.representation(target_x)?;
    WObjective::new(model, &z_src, &batch.t, &z_tgt, kernel)?.eval(model, alpha, lambda_w)
}

/// The unsplit objective with weights from the current weight network.
pub fn full_objective(
    model: &RcfrModel,
    batch: &SourceSample,
    target_x: &Matrix,
    kernel: &KernelConfig,
    alpha: f64,
    lambda_h: f64,
    lambda_w: f64,
) -> Result<f64> {
    let n = batch.len() as f64;
    let z_src = model.representation(&batch.x)?;
    let z_tgt = model.representation(target_x)?;
    let w = model.compute_weights(&z_src, &batch.t)?;
    let pred = model.heads_forward(&z_src, &batch.t)?.pred;
    let risk = weighted_sq_error(&pred, &batch.y, w.values());
    let ipm = balancing_ipm_value(&z_src, &batch.t, w.values(), &z_tgt, model.arm_count(), kernel)?;
    let norm = w.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(risk + lambda_h / n.sqrt() * model.head_sq_norm() + alpha * ipm + lambda_w * norm / n)
}
