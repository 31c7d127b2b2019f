//! Seeded generators for the domain-adaptation and treatment-effect
//! experiments.

use serde::{Deserialize, Serialize};

use crate::baselines::{gaussian_log_ratio, is_raw_weights, is_weights_gaussian};
use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::numerics::{dot, gaussian_matrix, Matrix, Rng};
use crate::weights::WeightVector;

use super::data::{CateDataset, SourceSample, TargetSample};

/// Variance of each coefficient of the outcome direction β.
pub const BETA_VARIANCE: f64 = 1.5;

/// Two unit-covariance Gaussian domains sharing `y = σ(βᵀx + c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Every coordinate of the source mean.
    pub source_mean: f64,
    /// Every coordinate of the target mean.
    pub target_mean: f64,
    /// Fixed outcome direction; drawn from `N(0, 1.5·I)` when absent.
    pub beta: Option<Vec<f64>>,
    /// Fixed offset; drawn from `N(0, 1)` when absent.
    pub offset: Option<f64>,
}

impl Default for DaSpec {
    fn default() -> Self {
        Self {
            n: 100,
            m: 1000,
            d: 10,
            source_mean: 0.5,
            target_mean: -0.5,
            beta: None,
            offset: None,
        }
    }
}

impl DaSpec {
    pub fn new(n: usize, m: usize, d: usize) -> Self {
        Self { n, m, d, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.d == 0 {
            return Err(Error::Config(format!("n, m and d must be positive, got {}, {}, {}", self.n, self.m, self.d)));
        }
        if let Some(b) = &self.beta {
            if b.len() != self.d {
                return Err(Error::Config(format!("beta has length {}, expected {}", b.len(), self.d)));
            }
        }
        if !self.source_mean.is_finite() || !self.target_mean.is_finite() {
            return Err(Error::Config("domain means must be finite".into()));
        }
        Ok(())
    }
}

/// The generating parameters, kept for oracle weights and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DaOracle {
    pub m_mu: Vec<f64>,
    pub m_pi: Vec<f64>,
    pub beta: Vec<f64>,
    pub offset: f64,
}

impl DaOracle {
    /// `p_π(x)/p_μ(x)` for one context.
    pub fn raw_weight(&self, x: &[f64]) -> f64 {
        gaussian_log_ratio(x, &self.m_mu, &self.m_pi).exp()
    }

    pub fn raw_weights(&self, x: &Matrix) -> Result<Vec<f64>> {
        is_raw_weights(x, &self.m_mu, &self.m_pi)
    }

    /// Exact importance weights, mean-normalized over `x`.
    pub fn weights(&self, x: &Matrix) -> Result<WeightVector> {
        is_weights_gaussian(x, &self.m_mu, &self.m_pi)
    }

    pub fn outcome(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.beta, x) + self.offset)
    }
}

#[derive(Debug, Clone)]
pub struct DaProblem {
    pub source: SourceSample,
    /// Target contexts with outcomes hidden for evaluation.
    pub target: TargetSample,
    pub oracle: DaOracle,
}

/// Draw one problem. β and c come from stream 0 of `seed`, source contexts
/// from stream 1 and target contexts from stream 2, so a smaller `n` sees a
/// prefix of the same source sample.
pub fn gen_synthetic_da(spec: &DaSpec, seed: u64) -> Result<DaProblem> {
    spec.validate()?;
    let d = spec.d;
    let mut params = Rng::stream(seed, 0);
    let beta = match &spec.beta {
        Some(b) => b.clone(),
        None => (0..d).map(|_| BETA_VARIANCE.sqrt() * params.normal()).collect(),
    };
    let offset = spec.offset.unwrap_or_else(|| params.normal());
    let oracle = DaOracle {
        m_mu: vec![spec.source_mean; d],
        m_pi: vec![spec.target_mean; d],
        beta,
        offset,
    };
    let x = gaussian_matrix(&mut Rng::stream(seed, 1), spec.n, d, &oracle.m_mu, 1.0)?;
    let xt = gaussian_matrix(&mut Rng::stream(seed, 2), spec.m, d, &oracle.m_pi, 1.0)?;
    let outcomes = |x: &Matrix| (0..x.rows()).map(|i| oracle.outcome(x.row(i))).collect::<Vec<_>>();
    let y = outcomes(&x);
    let yt = outcomes(&xt);
    Ok(DaProblem {
        source: SourceSample::new(x, vec![0; spec.n], y)?,
        target: TargetSample::with_hidden_outcomes(xt, vec![0; spec.m], yt)?,
        oracle,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectFamily {
    /// `τ(x) = bᵀx + b₀`.
    Linear,
    /// `τ(x) = x₁² − x₂ + b₀`.
    Quadratic,
}

/// Confounded binary-treatment data with known potential-outcome means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CateSpec {
    pub n: usize,
    pub d: usize,
    /// Confounding strength: `p(t = 1 | x) = σ(γ·x₁)`.
    pub gamma: f64,
    pub effect: EffectFamily,
    /// Outcome noise standard deviation.
    pub noise: f64,
    /// Linear effect direction; drawn from `N(0, I/d)` when absent.
    pub effect_coef: Option<Vec<f64>>,
    pub effect_offset: f64,
}

impl Default for CateSpec {
    fn default() -> Self {
        Self {
            n: 500,
            d: 5,
            gamma: 2.0,
            effect: EffectFamily::Quadratic,
            noise: 0.0,
            effect_coef: None,
            effect_offset: 1.0,
        }
    }
}

impl CateSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config(format!("n and d must be positive, got {} and {}", self.n, self.d)));
        }
        if !self.gamma.is_finite() || !self.effect_offset.is_finite() {
            return Err(Error::Config("gamma and effect_offset must be finite".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be non-negative, got {}", self.noise)));
        }
        if self.effect == EffectFamily::Quadratic && self.d < 2 {
            return Err(Error::Config("the quadratic effect needs d ≥ 2".into()));
        }
        if let Some(b) = &self.effect_coef {
            if b.len() != self.d {
                return Err(Error::Config(format!("effect_coef has length {}, expected {}", b.len(), self.d)));
            }
        }
        Ok(())
    }
}

/// `x ~ N(0, I)`, `t ~ Bernoulli(σ(γx₁))`, `mu0 = xᵀa` with `a ~ N(0, I/d)`,
/// `mu1 = mu0 + τ(x)`, outcomes `mu_t + N(0, σ_n²)`.
pub fn gen_synthetic_cate(spec: &CateSpec, seed: u64) -> Result<CateDataset> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let scale = (1.0 / d as f64).sqrt();
    let mut params = Rng::stream(seed, 0);
    let a: Vec<f64> = (0..d).map(|_| scale * params.normal()).collect();
    let b: Vec<f64> = match &spec.effect_coef {
        Some(b) => b.clone(),
        None => (0..d).map(|_| scale * params.normal()).collect(),
    };
    let mut rng = Rng::stream(seed, 1);
    let x = gaussian_matrix(&mut rng, n, d, &vec![0.0; d], 1.0)?;
    let mut t = Vec::with_capacity(n);
    let mut mu0 = Vec::with_capacity(n);
    let mut mu1 = Vec::with_capacity(n);
    let mut y_factual = Vec::with_capacity(n);
    let mut y_cfactual = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i);
        let ti = usize::from(rng.uniform() < sigmoid(spec.gamma * row[0]));
        let base = dot(row, &a);
        let tau = match spec.effect {
            EffectFamily::Linear => dot(row, &b) + spec.effect_offset,
            EffectFamily::Quadratic => row[0] * row[0] - row[1] + spec.effect_offset,
        };
        let mu = [base, base + tau];
        let (e_f, e_cf) = if spec.noise > 0.0 {
            (spec.noise * rng.normal(), spec.noise * rng.normal())
        } else {
            (0.0, 0.0)
        };
        t.push(ti);
        y_factual.push(mu[ti] + e_f);
        y_cfactual.push(mu[1 - ti] + e_cf);
        mu0.push(mu[0]);
        mu1.push(mu[1]);
    }
    let data = CateDataset {
        x,
        t,
        y_factual,
        y_cfactual: Some(y_cfactual),
        mu0: Some(mu0),
        mu1: Some(mu1),
    };
    data.validate()?;
    Ok(data)
}
