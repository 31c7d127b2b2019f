//! Alternating optimization of (h, Φ) and w with early stopping.
//!
//! Each cycle runs `hphi_steps_per_cycle` minibatch ADAM steps on the h/Φ
//! objective with frozen weights, then `w_steps_per_cycle` full-batch ADAM
//! steps on the w objective with a frozen representation. The IPM in the h/Φ
//! step is computed between the source minibatch and an equally sized target
//! minibatch drawn uniformly.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::{SourceSample, TargetSample};
use crate::nn::{AdamConfig, AdamState};
use crate::numerics::{Matrix, Rng};
use crate::weights::WeightVector;

use super::alpha::{adaptive_alpha, AlphaState};
use super::config::{AlphaMode, EarlyStopping, TrainConfig, WeightNormalization};
use super::model::RcfrModel;
use super::objective::{balancing_ipm_value, objective_h_phi, weighted_sq_error, HPhiOutput, WObjective};

/// Attempts at drawing a minibatch that contains every arm.
const ARM_RESAMPLE_TRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean weighted factual risk over the epoch's h/Φ batches.
    pub weighted_risk: f64,
    /// Mean IPM over the epoch's h/Φ batches.
    pub ipm: f64,
    /// `λ_w‖w‖₂/n` after the last w step (0 without learned weights).
    pub weight_norm: f64,
    /// Early-stopping metric; the training objective when there is no
    /// validation sample.
    pub validation_objective: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Where the sample weights come from.
#[derive(Debug, Clone, Copy)]
pub enum Weighting<'a> {
    /// The model's weight network, trained on the w objective.
    Learned,
    /// `w = 1`.
    Uniform,
    /// Precomputed weights for every source row, renormalized per batch.
    Fixed(&'a WeightVector),
}

/// Train with learned weights (or uniform weights when
/// `cfg.learn_weights` is false).
pub fn fit(source: &SourceSample, target: &TargetSample, cfg: &TrainConfig, validation: Option<&SourceSample>) -> Result<(RcfrModel, TrainHistory)> {
    let weighting = if cfg.learn_weights { Weighting::Learned } else { Weighting::Uniform };
    fit_with(source, target, cfg, validation, weighting, &mut |_| {})
}

/// Train the same architecture with weights supplied from outside.
pub fn fit_fixed_weights(
    source: &SourceSample,
    target: &TargetSample,
    cfg: &TrainConfig,
    validation: Option<&SourceSample>,
    weights: &WeightVector,
) -> Result<(RcfrModel, TrainHistory)> {
    fit_with(source, target, cfg, validation, Weighting::Fixed(weights), &mut |_| {})
}

/// Full training entry point. `observe` sees every weight vector the run
/// produces (minibatch, w-step and validation weights).
pub fn fit_with(
    source: &SourceSample,
    target: &TargetSample,
    cfg: &TrainConfig,
    validation: Option<&SourceSample>,
    weighting: Weighting<'_>,
    observe: &mut dyn FnMut(&WeightVector),
) -> Result<(RcfrModel, TrainHistory)> {
    cfg.validate()?;
    if cfg.alpha_mode == AlphaMode::Oracle {
        return Err(Error::Config(
            "oracle alpha is selected by the experiment harness; fit each grid value with alpha_mode = fixed".into(),
        ));
    }
    let n = source.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty source sample".into()));
    }
    if target.is_empty() {
        return Err(Error::InvalidArgument("empty target sample".into()));
    }
    if target.x.cols() != source.dim() {
        return Err(Error::Shape {
            op: "fit",
            left: source.x.shape(),
            right: target.x.shape(),
        });
    }
    if let Weighting::Fixed(w) = weighting {
        if w.len() != n {
            return Err(Error::InvalidWeights(format!("{} fixed weights for {n} source rows", w.len())));
        }
    }
    let arms = source.arms().max(validation.map_or(0, SourceSample::arms));
    if let Some(v) = validation {
        if v.dim() != source.dim() {
            return Err(Error::Shape {
                op: "fit validation",
                left: source.x.shape(),
                right: v.x.shape(),
            });
        }
    }

    let mut rng = Rng::new(cfg.seed);
    let mut trainer = Trainer::new(source.dim(), arms, cfg, &mut rng)?;

    let batch = cfg.batch_size.min(n);
    let hsteps = cfg.hphi_steps_per_cycle.unwrap_or_else(|| n.div_ceil(batch));
    let m = target.len();
    let val_target_x = validation.map(|v| target.x.select_rows(&rng.sample_indices(m, v.len())));
    let arm_present = {
        let mut p = vec![false; arms];
        for &t in &source.t {
            p[t] = true;
        }
        p
    };
    let per_arm = cfg.weight_normalization == WeightNormalization::PerArm && arms > 1;

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, RcfrModel)> = None;
    let mut since_best = 0usize;
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0usize;

    for epoch in 0..cfg.max_epochs {
        let mut risk_sum = 0.0;
        let mut ipm_sum = 0.0;
        let mut obj_sum = 0.0;
        for step in 0..hsteps {
            let abort = |detail: String| Error::NumericalAbort { epoch, step, detail };
            if !trainer.model.is_finite() {
                return Err(abort("model parameters are no longer finite".into()));
            }
            if cursor >= order.len() {
                order = rng.permutation(n);
                cursor = 0;
            }
            let end = (cursor + batch).min(order.len());
            let mut idx = order[cursor..end].to_vec();
            cursor = end;
            if arms > 1 && !covers_arms(&idx, &source.t, &arm_present) {
                for _ in 0..ARM_RESAMPLE_TRIES {
                    idx = rng.sample_indices(n, batch);
                    if covers_arms(&idx, &source.t, &arm_present) {
                        break;
                    }
                }
            }
            let b = source.subset(&idx);
            let tgt_x = target.x.select_rows(&rng.sample_indices(m, b.len()));

            let w = match weighting {
                Weighting::Learned => {
                    let z = trainer.model.representation(&b.x)?;
                    trainer.model.compute_weights(&z, &b.t).map_err(|e| abort(e.to_string()))?
                }
                Weighting::Uniform => WeightVector::uniform(b.len()),
                Weighting::Fixed(all) => {
                    let raw: Vec<f64> = idx.iter().map(|&i| all.values()[i]).collect();
                    if per_arm {
                        WeightVector::from_raw_grouped(raw, &b.t)?
                    } else {
                        WeightVector::from_raw(raw)?
                    }
                }
            };
            observe(&w);

            let out = trainer.h_step(&b, &tgt_x, &w).map_err(|e| match e {
                Error::NumericalAbort { detail, .. } => abort(detail),
                e if e.is_numerical() => abort(e.to_string()),
                e => e,
            })?;
            risk_sum += out.risk;
            ipm_sum += out.ipm;
            obj_sum += out.value;
        }

        let alpha = trainer.alpha();
        let mut weight_norm = 0.0;
        if matches!(weighting, Weighting::Learned) && cfg.w_steps_per_cycle > 0 {
            let tgt_x = target.x.select_rows(&rng.sample_indices(m, n));
            weight_norm = trainer
                .w_steps(source, &tgt_x, cfg.w_steps_per_cycle, observe)
                .map_err(|e| match e {
                    Error::NumericalAbort { step, detail, .. } => Error::NumericalAbort {
                        epoch,
                        step: hsteps + step,
                        detail,
                    },
                    e => e,
                })?;
            if !trainer.model.is_finite() {
                return Err(Error::NumericalAbort {
                    epoch,
                    step: hsteps + cfg.w_steps_per_cycle,
                    detail: "weight network parameters are no longer finite".into(),
                });
            }
        }

        let steps = hsteps as f64;
        let monitored = match (validation, &val_target_x) {
            (Some(val), Some(vt)) => {
                let z = trainer.model.representation(&val.x)?;
                let w = match weighting {
                    Weighting::Learned => trainer.model.compute_weights(&z, &val.t).map_err(|e| Error::NumericalAbort {
                        epoch,
                        step: hsteps + cfg.w_steps_per_cycle,
                        detail: format!("validation weights: {e}"),
                    })?,
                    _ => WeightVector::uniform(val.len()),
                };
                observe(&w);
                let pred = trainer.model.heads_forward(&z, &val.t)?.pred;
                let mut obj = weighted_sq_error(&pred, &val.y, w.values());
                if cfg.early_stopping == EarlyStopping::Objective && alpha != 0.0 {
                    let zt = trainer.model.representation(vt)?;
                    obj += alpha * balancing_ipm_value(&z, &val.t, w.values(), &zt, arms, &cfg.kernel)?;
                }
                obj
            }
            _ => obj_sum / steps,
        };
        if !monitored.is_finite() {
            return Err(Error::NumericalAbort {
                epoch,
                step: hsteps + cfg.w_steps_per_cycle,
                detail: format!("monitored objective is {monitored}"),
            });
        }
        history.records.push(EpochRecord {
            epoch,
            weighted_risk: risk_sum / steps,
            ipm: ipm_sum / steps,
            weight_norm,
            validation_objective: monitored,
            alpha,
        });

        if validation.is_some() {
            if best.as_ref().is_none_or(|(b, _)| monitored < *b) {
                let mut snapshot = trainer.model.clone();
                snapshot.alpha = alpha;
                best = Some((monitored, snapshot));
                history.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    history.stopped_early = true;
                    break;
                }
            }
        }
    }

    let model = match best {
        Some((_, m)) => m,
        None => {
            history.best_epoch = history.records.len().saturating_sub(1);
            let alpha = trainer.alpha();
            let mut model = trainer.model;
            model.alpha = alpha;
            model
        }
    };
    Ok((model, history))
}

/// Model plus optimizer state; one call per update.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: RcfrModel,
    cfg: TrainConfig,
    opt_rep: AdamState,
    opt_heads: Vec<AdamState>,
    opt_w: AdamState,
    alpha_state: AlphaState,
}

impl Trainer {
    pub fn new(input_dim: usize, arms: usize, cfg: &TrainConfig, rng: &mut Rng) -> Result<Self> {
        let model = RcfrModel::new(input_dim, arms, &cfg.architecture, cfg.weight_normalization, &mut rng.fork())?;
        Ok(Self::from_model(model, cfg))
    }

    pub fn from_model(model: RcfrModel, cfg: &TrainConfig) -> Self {
        let adam = AdamConfig::with_lr(cfg.learning_rate);
        Self {
            opt_rep: AdamState::new(&model.rep_net, adam),
            opt_heads: model.heads.iter().map(|h| AdamState::new(h, adam)).collect(),
            opt_w: AdamState::new(&model.weight_net, adam),
            alpha_state: AlphaState::new(cfg.alpha, cfg.alpha_decay),
            cfg: cfg.clone(),
            model,
        }
    }

    /// α currently in effect.
    pub fn alpha(&self) -> f64 {
        match self.cfg.alpha_mode {
            AlphaMode::Adaptive => self.alpha_state.alpha,
            _ => self.cfg.alpha,
        }
    }

    /// One ADAM step on the representation and heads with frozen weights;
    /// updates the adaptive α afterwards.
    pub fn h_step(&mut self, batch: &SourceSample, target_x: &Matrix, w: &WeightVector) -> Result<HPhiOutput> {
        let cfg = &self.cfg;
        let out = objective_h_phi(&self.model, batch, target_x, w, &cfg.kernel, self.alpha(), cfg.lambda_h)?;
        if !out.value.is_finite() {
            return Err(Error::NumericalAbort {
                epoch: 0,
                step: 0,
                detail: format!("h/phi objective is {}", out.value),
            });
        }
        if !self.model.rep_net.is_identity() {
            self.opt_rep.step(&mut self.model.rep_net, &out.rep_grads)?;
        }
        for (a, (head, opt)) in self.model.heads.iter_mut().zip(self.opt_heads.iter_mut()).enumerate() {
            opt.step(head, &out.head_grads[a])?;
        }
        if cfg.alpha_mode == AlphaMode::Adaptive {
            self.alpha_state = adaptive_alpha(&self.alpha_state, &out.per_sample_loss, &batch.x)?;
        }
        Ok(out)
    }

    /// `steps` full-batch ADAM steps on the weight network with the
    /// representation frozen. Returns the final `λ_w‖w‖₂/n`.
    pub fn w_steps(&mut self, source: &SourceSample, target_x: &Matrix, steps: usize, observe: &mut dyn FnMut(&WeightVector)) -> Result<f64> {
        let z_src = self.model.representation(&source.x)?;
        let z_tgt = self.model.representation(target_x)?;
        let wobj = WObjective::new(&self.model, &z_src, &source.t, &z_tgt, &self.cfg.kernel)?;
        let alpha = self.alpha();
        let mut norm_term = 0.0;
        for step in 0..steps {
            let out = wobj
                .eval(&self.model, alpha, self.cfg.lambda_w)
                .map_err(|e| match e {
                    Error::InvalidWeights(detail) => Error::NumericalAbort { epoch: 0, step, detail },
                    e => e,
                })?;
            if !out.value.is_finite() {
                return Err(Error::NumericalAbort {
                    epoch: 0,
                    step,
                    detail: format!("w objective is {}", out.value),
                });
            }
            observe(&out.weights);
            self.opt_w
                .step(&mut self.model.weight_net, &out.grads)
                .map_err(|e| Error::NumericalAbort {
                    epoch: 0,
                    step,
                    detail: format!("weight network update: {e}"),
                })?;
            norm_term = out.norm_term;
        }
        Ok(norm_term)
    }
}

fn covers_arms(idx: &[usize], t: &[usize], present: &[bool]) -> bool {
    let mut seen = vec![false; present.len()];
    for &i in idx {
        seen[t[i]] = true;
    }
    seen.iter().zip(present).all(|(s, p)| *s || !*p)
}

/// Weighted risk of a model on a sample (weights must match its rows).
pub fn sample_risk(model: &RcfrModel, sample: &SourceSample, w: &WeightVector) -> Result<f64> {
    let pred = model.predict(&sample.x, &sample.t)?;
    Ok(weighted_sq_error(&pred, &sample.y, w.values()))
}
