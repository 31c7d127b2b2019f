//! Two-stage baseline: weights from IPM minimization in the input space,
//! then a network trained on the weighted factual risk alone.

use crate::error::{Error, Result};
use crate::experiments::{SourceSample, TargetSample};
use crate::ipm::{KernelConfig, WeightedMmd};
use crate::nn::{sigmoid, softplus};
use crate::numerics::Matrix;
use crate::predictor::OutcomeModel;
use crate::rcfr::{fit_fixed_weights, AlphaMode, RcfrModel, TrainConfig, TrainHistory, WeightNormalization, WEIGHT_FLOOR};
use crate::weights::{mean_normalization_backward, WeightVector};

pub const STAGE1_STEPS: usize = 1000;
/// Gradient-descent step on `n` times the objective, so the step does not
/// shrink with the sample size.
pub const STAGE1_STEP_SIZE: f64 = 1.0;

/// Settings of the free-weight optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct InputWeightConfig {
    pub kernel: KernelConfig,
    pub lambda_w: f64,
    pub normalization: WeightNormalization,
    pub steps: usize,
    pub step_size: f64,
}

impl InputWeightConfig {
    pub fn from_train(cfg: &TrainConfig) -> Self {
        Self {
            kernel: cfg.kernel,
            lambda_w: cfg.lambda_w,
            normalization: cfg.weight_normalization,
            steps: STAGE1_STEPS,
            step_size: STAGE1_STEP_SIZE,
        }
    }
}

/// One softplus-parameterized weight per source row, optimized by gradient
/// descent from uniform on `Σ_t u_t MMD²(w-weighted x | t, target x) + λ_w‖w‖₂/n`.
/// Plain descent keeps coordinates with negligible gradient where they are,
/// which a per-coordinate adaptive optimizer would not.
pub fn input_space_weights(source: &SourceSample, target_x: &Matrix, cfg: &InputWeightConfig) -> Result<WeightVector> {
    let n = source.len();
    if n == 0 || target_x.rows() == 0 {
        return Err(Error::InvalidArgument("input-space weighting needs non-empty samples".into()));
    }
    let arms = source.arms();
    let groups: Vec<Vec<usize>> = (0..arms)
        .map(|a| (0..n).filter(|&i| source.t[i] == a).collect::<Vec<_>>())
        .filter(|g| !g.is_empty())
        .collect();
    let terms = groups
        .iter()
        .map(|idx| Ok((WeightedMmd::new(&source.x.select_rows(idx), target_x, &cfg.kernel)?, idx.len() as f64 / n as f64)))
        .collect::<Result<Vec<_>>>()?;
    let norm_groups = if cfg.normalization == WeightNormalization::PerArm && arms > 1 {
        groups.clone()
    } else {
        vec![(0..n).collect()]
    };
    let normalize = |raw: Vec<f64>| -> Result<WeightVector> {
        if norm_groups.len() > 1 {
            WeightVector::from_raw_grouped(raw, &source.t)
        } else {
            WeightVector::from_raw(raw)
        }
    };

    let nf = n as f64;
    let mut theta = vec![0.0; n];
    for _ in 0..cfg.steps {
        let raw: Vec<f64> = theta.iter().map(|&v| softplus(v) + WEIGHT_FLOOR).collect();
        let w = normalize(raw.clone())?;
        let w = w.values();
        let mut grad_w = vec![0.0; n];
        for (idx, (mmd, u)) in groups.iter().zip(&terms) {
            let sub: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
            let (_, g) = mmd.eval(&sub)?;
            for (&i, gi) in idx.iter().zip(g) {
                grad_w[i] += u * gi;
            }
        }
        if cfg.lambda_w != 0.0 {
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (g, wi) in grad_w.iter_mut().zip(w) {
                *g += cfg.lambda_w * wi / (norm * nf);
            }
        }
        let grad_raw = mean_normalization_backward(&raw, w, &grad_w, &norm_groups);
        for (v, g) in theta.iter_mut().zip(&grad_raw) {
            let step = cfg.step_size * nf * g * sigmoid(*v);
            if !step.is_finite() {
                return Err(Error::NonFiniteGradient { layer: 0 });
            }
            *v -= step;
        }
    }
    normalize(theta.iter().map(|&v| softplus(v) + WEIGHT_FLOOR).collect())
}

/// A network trained with frozen input-space weights.
#[derive(Debug, Clone)]
pub struct IpmWnnFit {
    pub model: RcfrModel,
    pub weights: WeightVector,
    pub history: TrainHistory,
}

impl OutcomeModel for IpmWnnFit {
    fn arms(&self) -> usize {
        self.model.arm_count()
    }

    fn predict(&self, x: &Matrix, t: &[usize]) -> Result<Vec<f64>> {
        self.model.predict(x, t)
    }
}

/// Stage 1 learns the weights; stage 2 trains the RCFR architecture on the
/// weighted factual risk with α = 0.
pub fn ipm_wnn_fit(source: &SourceSample, target: &TargetSample, cfg: &TrainConfig, validation: Option<&SourceSample>) -> Result<IpmWnnFit> {
    cfg.validate()?;
    if target.x.cols() != source.dim() {
        return Err(Error::Shape {
            op: "ipm-wnn",
            left: source.x.shape(),
            right: target.x.shape(),
        });
    }
    let weights = input_space_weights(source, &target.x, &InputWeightConfig::from_train(cfg))?;
    let stage2 = TrainConfig {
        alpha_mode: AlphaMode::Fixed,
        alpha: 0.0,
        learn_weights: false,
        ..cfg.clone()
    };
    let (model, history) = fit_fixed_weights(source, target, &stage2, validation, &weights)?;
    Ok(IpmWnnFit { model, weights, history })
}
