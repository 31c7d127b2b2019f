use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipm::KernelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    /// `alpha` is used as given.
    Fixed,
    /// Lipschitz-style estimate from each batch, smoothed by an EMA starting
    /// at `alpha`.
    Adaptive,
    /// Fixed α chosen afterwards from `alpha_grid` by test error. Resolved by
    /// the experiment harness, never by a single fit.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightNormalization {
    /// Mean one over the whole batch.
    Global,
    /// Mean one within each treatment arm.
    PerArm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EarlyStopping {
    /// Weighted factual risk plus α·IPM on the validation sample.
    Objective,
    /// Weighted factual risk only.
    Factual,
}

/// Layer widths of the three networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Hidden widths of the representation; empty means the identity map.
    pub rep_layers: Vec<usize>,
    /// Divide each representation row by its Euclidean norm.
    pub normalize_representation: bool,
    /// Hidden widths of each per-arm hypothesis; empty means linear.
    pub head_layers: Vec<usize>,
    pub weight_layers: Vec<usize>,
}

impl Architecture {
    /// Representation 32 → 16, one hidden layer of 16 per head, weight net
    /// 32 → 32.
    pub fn network() -> Self {
        Self {
            rep_layers: vec![32, 16],
            normalize_representation: true,
            head_layers: vec![16],
            weight_layers: vec![32, 32],
        }
    }

    /// Identity representation with linear hypotheses, weight net 10 → 10.
    pub fn linear_identity() -> Self {
        Self {
            rep_layers: Vec::new(),
            normalize_representation: false,
            head_layers: Vec::new(),
            weight_layers: vec![10, 10],
        }
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self::network()
    }
}

/// Every knob of a training run. Unknown keys are rejected when parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub alpha_mode: AlphaMode,
    /// Fixed α, or the starting value of the adaptive estimate.
    pub alpha: f64,
    pub alpha_decay: f64,
    pub alpha_grid: Vec<f64>,
    pub lambda_h: f64,
    pub lambda_w: f64,
    pub kernel: KernelConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Number of w updates after each pass of h/Φ updates.
    pub w_steps_per_cycle: usize,
    /// h/Φ minibatch updates per cycle; `None` means one epoch, `⌈n/batch⌉`.
    pub hphi_steps_per_cycle: Option<usize>,
    /// `false` trains with uniform weights (`w = 1`).
    pub learn_weights: bool,
    pub weight_normalization: WeightNormalization,
    pub early_stopping: EarlyStopping,
    pub architecture: Architecture,
}

pub const ALPHA_MIN: f64 = 1e-6;
pub const ALPHA_MAX: f64 = 1e4;

impl Default for TrainConfig {
    fn default() -> Self {
        Self::cate()
    }
}

impl TrainConfig {
    /// Treatment-effect defaults.
    pub fn cate() -> Self {
        Self {
            alpha_mode: AlphaMode::Fixed,
            alpha: 1.0,
            alpha_decay: 0.99,
            alpha_grid: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            lambda_h: 1e-4,
            lambda_w: 0.1,
            kernel: KernelConfig::default(),
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 300,
            patience: 30,
            seed: 0,
            w_steps_per_cycle: 10,
            hphi_steps_per_cycle: None,
            learn_weights: true,
            weight_normalization: WeightNormalization::PerArm,
            early_stopping: EarlyStopping::Objective,
            architecture: Architecture::network(),
        }
    }

    /// Synthetic domain-adaptation defaults: identity representation, linear
    /// hypothesis, α = 10, λ_w = 1e−3.
    pub fn synthetic_da() -> Self {
        Self {
            alpha: 10.0,
            lambda_h: 0.0,
            lambda_w: 1e-3,
            learning_rate: 1e-2,
            max_epochs: 300,
            patience: 300,
            weight_normalization: WeightNormalization::Global,
            architecture: Architecture::linear_identity(),
            ..Self::cate()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be non-negative, got {v}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        non_negative("alpha", self.alpha)?;
        non_negative("lambda_h", self.lambda_h)?;
        non_negative("lambda_w", self.lambda_w)?;
        self.kernel.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.alpha_decay >= 0.0 && self.alpha_decay <= 1.0) {
            return Err(Error::Config(format!("alpha_decay must lie in [0, 1], got {}", self.alpha_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.hphi_steps_per_cycle == Some(0) {
            return Err(Error::Config("hphi_steps_per_cycle must be at least 1".into()));
        }
        if self.alpha_mode == AlphaMode::Oracle {
            if self.alpha_grid.is_empty() {
                return Err(Error::Config("oracle alpha needs a non-empty alpha_grid".into()));
            }
            for &a in &self.alpha_grid {
                non_negative("alpha_grid entry", a)?;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
