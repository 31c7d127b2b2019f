//! One fit-and-evaluate run per method.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{clip_weights, ipm_wnn_fit, ipw_weights, ols_fit, ols_weighted_fit, propensity_fit};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::rcfr::{fit, fit_fixed_weights, AlphaMode, RcfrModel, TrainConfig};

use super::data::{CateDataset, TargetSample};
use super::eval::{eval_cate, eval_da, CateMetrics};
use super::split::SplitConfig;
use super::synthetic::DaProblem;

/// Stream of the run seed used for the train/validation/test permutation.
const SPLIT_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DaMethod {
    /// Learned weights.
    Rcfr,
    /// Exact importance weights.
    Is,
    /// Importance weights clipped at 5.
    Isc5,
    /// Importance weights clipped at 10.
    Isc10,
    Uniform,
}

impl DaMethod {
    pub const ALL: [DaMethod; 5] = [DaMethod::Rcfr, DaMethod::Is, DaMethod::Isc5, DaMethod::Isc10, DaMethod::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            DaMethod::Rcfr => "rcfr",
            DaMethod::Is => "is",
            DaMethod::Isc5 => "isc5",
            DaMethod::Isc10 => "isc10",
            DaMethod::Uniform => "uniform",
        }
    }

    pub fn clip(self) -> Option<f64> {
        match self {
            DaMethod::Isc5 => Some(5.0),
            DaMethod::Isc10 => Some(10.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CateMethod {
    Rcfr,
    /// The RCFR network with `w = 1`.
    RcfrUniform,
    Ols,
    OlsIpw,
    IpmWnn,
}

impl CateMethod {
    pub const ALL: [CateMethod; 5] = [
        CateMethod::Rcfr,
        CateMethod::RcfrUniform,
        CateMethod::Ols,
        CateMethod::OlsIpw,
        CateMethod::IpmWnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CateMethod::Rcfr => "rcfr",
            CateMethod::RcfrUniform => "rcfr-uniform",
            CateMethod::Ols => "ols",
            CateMethod::OlsIpw => "ols-ipw",
            CateMethod::IpmWnn => "ipm-wnn",
        }
    }

    /// Methods whose fit depends on α.
    pub fn uses_alpha(self) -> bool {
        matches!(self, CateMethod::Rcfr | CateMethod::RcfrUniform)
    }

    pub fn is_network(self) -> bool {
        !matches!(self, CateMethod::Ols | CateMethod::OlsIpw)
    }
}

fn names<T: Copy>(all: &[T], name: fn(T) -> &'static str) -> String {
    all.iter().map(|&m| name(m)).collect::<Vec<_>>().join(", ")
}

impl FromStr for DaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DaMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`; valid: {}", names(&DaMethod::ALL, DaMethod::name))))
    }
}

impl FromStr for CateMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CateMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`; valid: {}", names(&CateMethod::ALL, CateMethod::name))))
    }
}

impl fmt::Display for DaMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for CateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct DaRun {
    pub target_rmse: f64,
    pub model: RcfrModel,
}

/// Fit on the source sample with the method's weights and report the RMSE
/// on the hidden target outcomes. Training only ever sees the unlabeled
/// target.
pub fn run_da(problem: &DaProblem, method: DaMethod, cfg: &TrainConfig) -> Result<DaRun> {
    let target = problem.target.unlabeled();
    let (model, _) = match method {
        DaMethod::Rcfr => fit(&problem.source, &target, &TrainConfig { learn_weights: true, ..cfg.clone() }, None)?,
        DaMethod::Uniform => fit(&problem.source, &target, &TrainConfig { learn_weights: false, ..cfg.clone() }, None)?,
        DaMethod::Is | DaMethod::Isc5 | DaMethod::Isc10 => {
            let w = match method.clip() {
                Some(m) => clip_weights(&problem.oracle.raw_weights(&problem.source.x)?, m)?,
                None => problem.oracle.weights(&problem.source.x)?,
            };
            fit_fixed_weights(&problem.source, &target, cfg, None, &w)?
        }
    };
    Ok(DaRun {
        target_rmse: eval_da(&model, &problem.target)?,
        model,
    })
}

/// Result of one method on one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct CateRun {
    pub metrics: CateMetrics,
    /// α in effect at the end (the selected value for oracle α; `None` for
    /// methods that do not use it).
    pub alpha: Option<f64>,
    pub oracle: bool,
    /// The fitted network for network methods.
    pub model: Option<RcfrModel>,
}

/// Split the realization with `seed`, fit on the training rows (the
/// validation rows drive early stopping) and evaluate on the test rows.
pub fn run_cate(data: &CateDataset, method: CateMethod, cfg: &TrainConfig, split: &SplitConfig, seed: u64) -> Result<CateRun> {
    data.validate()?;
    let parts = split.split(data.len(), &mut Rng::stream(seed, SPLIT_STREAM))?;
    let all = data.factual();
    let train = all.subset(&parts.train);
    let val = all.subset(&parts.validation);
    let target = TargetSample::new(train.x.clone(), vec![0; train.len()])?;
    let cfg = TrainConfig { seed, ..cfg.clone() };

    let fit_network = |cfg: &TrainConfig| -> Result<(CateMetrics, RcfrModel)> {
        let model = match method {
            CateMethod::Rcfr => fit(&train, &target, &TrainConfig { learn_weights: true, ..cfg.clone() }, Some(&val))?.0,
            CateMethod::RcfrUniform => fit(&train, &target, &TrainConfig { learn_weights: false, ..cfg.clone() }, Some(&val))?.0,
            _ => ipm_wnn_fit(&train, &target, cfg, Some(&val))?.model,
        };
        Ok((eval_cate(&model, data, &parts.test)?, model))
    };
    let plain = |metrics, alpha, model| CateRun {
        metrics,
        alpha,
        oracle: false,
        model,
    };

    match method {
        CateMethod::Ols => Ok(plain(eval_cate(&ols_fit(&train.x, &train.t, &train.y)?, data, &parts.test)?, None, None)),
        CateMethod::OlsIpw => {
            let pm = propensity_fit(&train.x, &train.t)?;
            let w = ipw_weights(&pm, &train.x, &train.t)?;
            Ok(plain(eval_cate(&ols_weighted_fit(&train.x, &train.t, &train.y, &w)?, data, &parts.test)?, None, None))
        }
        CateMethod::IpmWnn => {
            let (metrics, model) = fit_network(&cfg)?;
            Ok(plain(metrics, None, Some(model)))
        }
        CateMethod::Rcfr | CateMethod::RcfrUniform if cfg.alpha_mode == AlphaMode::Oracle => {
            let mut best: Option<(f64, CateMetrics, RcfrModel)> = None;
            for &alpha in &cfg.alpha_grid {
                let fixed = TrainConfig {
                    alpha_mode: AlphaMode::Fixed,
                    alpha,
                    ..cfg.clone()
                };
                let (m, model) = fit_network(&fixed)?;
                if best.as_ref().is_none_or(|(_, b, _)| m.rmse_tau < b.rmse_tau) {
                    best = Some((alpha, m, model));
                }
            }
            let (alpha, metrics, model) = best.ok_or_else(|| Error::Config("empty alpha_grid".into()))?;
            Ok(CateRun {
                metrics,
                alpha: Some(alpha),
                oracle: true,
                model: Some(model),
            })
        }
        CateMethod::Rcfr | CateMethod::RcfrUniform => {
            let (metrics, model) = fit_network(&cfg)?;
            Ok(plain(metrics, Some(model.alpha), Some(model)))
        }
    }
}

/// Column label: the method name, suffixed for adaptive and oracle α.
pub fn cate_label(method: CateMethod, mode: AlphaMode) -> String {
    match (method.uses_alpha(), mode) {
        (true, AlphaMode::Adaptive) => format!("{}-adaptive", method.name()),
        (true, AlphaMode::Oracle) => format!("{}-oracle", method.name()),
        _ => method.name().to_string(),
    }
}
