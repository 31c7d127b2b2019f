use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, ForwardCache, Gradients, Mlp, ParamDoc};
use crate::numerics::{Matrix, Rng};
use crate::predictor::OutcomeModel;
use crate::weights::WeightVector;

use super::config::{Architecture, TrainConfig, WeightNormalization};

/// Guard on the representation norm.
pub const NORM_EPS: f64 = 1e-8;
/// Added to the softplus output so raw weights stay strictly positive.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Representation network, one hypothesis head per arm, and a weight network
/// on the representation (plus an arm one-hot when there are several arms).
#[derive(Debug, Clone, PartialEq)]
pub struct RcfrModel {
    pub rep_net: Mlp,
    pub normalize_rep: bool,
    pub heads: Vec<Mlp>,
    pub weight_net: Mlp,
    pub weight_normalization: WeightNormalization,
    /// α at the end of training.
    pub alpha: f64,
}

/// Output of a representation pass that can be back-propagated.
#[derive(Debug, Clone)]
pub(crate) struct RepPass {
    cache: ForwardCache,
    norms: Vec<f64>,
    pub z: Matrix,
}

/// Per-arm head passes over a batch.
#[derive(Debug)]
pub(crate) struct HeadPass {
    arms: Vec<(usize, Vec<usize>, ForwardCache)>,
    pub pred: Vec<f64>,
    rows: usize,
}

impl RcfrModel {
    pub fn new(input_dim: usize, arms: usize, arch: &Architecture, weight_normalization: WeightNormalization, rng: &mut Rng) -> Result<Self> {
        if arms == 0 {
            return Err(Error::InvalidArgument("a model needs at least one arm".into()));
        }
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        let rep_net = if arch.rep_layers.is_empty() {
            Mlp::identity(input_dim)
        } else {
            Mlp::new(input_dim, &arch.rep_layers, Activation::Elu, Activation::Elu, rng)
        };
        let rep_dim = rep_net.output_dim();
        let mut head_widths = arch.head_layers.clone();
        head_widths.push(1);
        let heads = (0..arms)
            .map(|_| Mlp::new(rep_dim, &head_widths, Activation::Elu, Activation::Linear, rng))
            .collect();
        let mut w_widths = arch.weight_layers.clone();
        w_widths.push(1);
        let w_in = rep_dim + if arms > 1 { arms } else { 0 };
        let weight_net = Mlp::new(w_in, &w_widths, Activation::Elu, Activation::Softplus, rng);
        Ok(Self {
            rep_net,
            normalize_rep: arch.normalize_representation,
            heads,
            weight_net,
            weight_normalization,
            alpha: 0.0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.rep_net.input_dim()
    }

    pub fn rep_dim(&self) -> usize {
        self.rep_net.output_dim()
    }

    pub fn arm_count(&self) -> usize {
        self.heads.len()
    }

    fn check_arms(&self, t: &[usize]) -> Result<()> {
        if let Some((i, &a)) = t.iter().enumerate().find(|(_, &a)| a >= self.heads.len()) {
            return Err(Error::InvalidArgument(format!(
                "row {i}: arm {a} unknown to a model with {} arms",
                self.heads.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn rep_forward(&self, x: &Matrix) -> Result<RepPass> {
        let (raw, cache) = self.rep_net.forward(x)?;
        let mut z = raw;
        let mut norms = Vec::new();
        if self.normalize_rep {
            norms.reserve(z.rows());
            for r in 0..z.rows() {
                let row = z.row_mut(r);
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                let denom = norm.max(NORM_EPS);
                for v in row.iter_mut() {
                    *v /= denom;
                }
                norms.push(norm);
            }
        }
        Ok(RepPass { cache, norms, z })
    }

    /// Back-propagate a gradient on the (normalized) representation into the
    /// representation network.
    pub(crate) fn rep_backward(&self, pass: &RepPass, grad_z: &Matrix) -> Result<Gradients> {
        let mut g = grad_z.clone();
        if self.normalize_rep {
            for r in 0..g.rows() {
                let norm = pass.norms[r];
                let zr = pass.z.row(r);
                let gr = g.row_mut(r);
                if norm > NORM_EPS {
                    let proj: f64 = zr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                    for (gv, zv) in gr.iter_mut().zip(zr) {
                        *gv = (*gv - zv * proj) / norm;
                    }
                } else {
                    for gv in gr.iter_mut() {
                        *gv /= NORM_EPS;
                    }
                }
            }
        }
        Ok(self.rep_net.backward(&pass.cache, &g)?.0)
    }

    /// Representation with each row scaled to unit norm (when enabled);
    /// rows whose raw norm is below `1e−8` are divided by `1e−8` instead.
    pub fn representation(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = self.rep_net.predict(x)?;
        if self.normalize_rep {
            normalize_rows(&mut z);
        }
        Ok(z)
    }

    pub(crate) fn heads_forward(&self, z: &Matrix, t: &[usize]) -> Result<HeadPass> {
        self.check_arms(t)?;
        if t.len() != z.rows() {
            return Err(Error::InvalidArgument(format!("{} arms for {} rows", t.len(), z.rows())));
        }
        let mut pred = vec![0.0; z.rows()];
        let mut arms = Vec::with_capacity(self.heads.len());
        for (a, head) in self.heads.iter().enumerate() {
            let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] == a).collect();
            if idx.is_empty() {
                continue;
            }
            let (out, cache) = head.forward(&z.select_rows(&idx))?;
            for (k, &i) in idx.iter().enumerate() {
                pred[i] = out.get(k, 0);
            }
            arms.push((a, idx, cache));
        }
        Ok(HeadPass {
            arms,
            pred,
            rows: z.rows(),
        })
    }

    /// Gradients of the heads and of the representation given `∂L/∂pred`.
    pub(crate) fn heads_backward(&self, pass: &HeadPass, grad_pred: &[f64], rep_dim: usize) -> Result<(Vec<Gradients>, Matrix)> {
        let mut head_grads: Vec<Gradients> = self.heads.iter().map(Gradients::zeros_like).collect();
        let mut grad_z = Matrix::zeros(pass.rows, rep_dim);
        for (arm, idx, cache) in &pass.arms {
            let arm = *arm;
            let g: Vec<f64> = idx.iter().map(|&i| grad_pred[i]).collect();
            let (hg, gz) = self.heads[arm].backward(cache, &Matrix::column(&g))?;
            head_grads[arm] = hg;
            for (k, &i) in idx.iter().enumerate() {
                grad_z.row_mut(i).copy_from_slice(gz.row(k));
            }
        }
        Ok((head_grads, grad_z))
    }

    /// `f(xᵢ, tᵢ) = head_{tᵢ}(Φ(xᵢ))`.
    pub fn predict(&self, x: &Matrix, t: &[usize]) -> Result<Vec<f64>> {
        self.check_arms(t)?;
        let z = self.representation(x)?;
        Ok(self.heads_forward(&z, t)?.pred)
    }

    /// Weight-network input: the representation, with an arm one-hot
    /// appended for multi-arm models.
    pub(crate) fn weight_input(&self, z: &Matrix, t: &[usize]) -> Result<Matrix> {
        if self.heads.len() <= 1 {
            return Ok(z.clone());
        }
        self.check_arms(t)?;
        let k = self.heads.len();
        let mut onehot = Matrix::zeros(t.len(), k);
        for (i, &a) in t.iter().enumerate() {
            onehot.set(i, a, 1.0);
        }
        z.hstack(&onehot)
    }

    /// `softplus(net) + 1e−6`, then mean-normalized (globally or per arm).
    pub fn compute_weights(&self, z: &Matrix, t: &[usize]) -> Result<WeightVector> {
        if z.rows() == 0 {
            return Err(Error::InvalidArgument("cannot weight an empty batch".into()));
        }
        if t.len() != z.rows() {
            return Err(Error::InvalidArgument(format!("{} arms for {} rows", t.len(), z.rows())));
        }
        let raw = self.raw_weights(&self.weight_input(z, t)?)?;
        self.normalize_weights(raw, t)
    }

    pub(crate) fn raw_weights(&self, input: &Matrix) -> Result<Vec<f64>> {
        Ok(self
            .weight_net
            .predict(input)?
            .data()
            .iter()
            .map(|v| v + WEIGHT_FLOOR)
            .collect())
    }

    pub(crate) fn normalize_weights(&self, raw: Vec<f64>, t: &[usize]) -> Result<WeightVector> {
        match self.weight_normalization {
            WeightNormalization::PerArm if self.heads.len() > 1 => WeightVector::from_raw_grouped(raw, t),
            _ => WeightVector::from_raw(raw),
        }
    }

    /// Learned weights for a labeled sample.
    pub fn sample_weights(&self, x: &Matrix, t: &[usize]) -> Result<WeightVector> {
        let z = self.representation(x)?;
        self.compute_weights(&z, t)
    }

    /// Sum of squared head weights.
    pub fn head_sq_norm(&self) -> f64 {
        self.heads.iter().map(Mlp::weight_sq_norm).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.rep_net.is_finite() && self.weight_net.is_finite() && self.heads.iter().all(Mlp::is_finite)
    }

    pub fn to_document(&self, config: &TrainConfig) -> ModelDocument {
        ModelDocument {
            header: ModelHeader {
                rep_dim: self.rep_dim(),
                arms: self.arm_count(),
                normalize_representation: self.normalize_rep,
                weight_normalization: self.weight_normalization,
                final_alpha: self.alpha,
                config: config.clone(),
            },
            rep_net: self.rep_net.to_doc(),
            heads: self.heads.iter().map(Mlp::to_doc).collect(),
            weight_net: self.weight_net.to_doc(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let model = Self {
            rep_net: Mlp::from_doc(&doc.rep_net)?,
            normalize_rep: doc.header.normalize_representation,
            heads: doc.heads.iter().map(Mlp::from_doc).collect::<Result<_>>()?,
            weight_net: Mlp::from_doc(&doc.weight_net)?,
            weight_normalization: doc.header.weight_normalization,
            alpha: doc.header.final_alpha,
        };
        if model.rep_dim() != doc.header.rep_dim || model.arm_count() != doc.header.arms {
            return Err(Error::Schema("model header disagrees with its parameters".into()));
        }
        Ok(model)
    }
}

pub(crate) fn normalize_rows(z: &mut Matrix) {
    for r in 0..z.rows() {
        let row = z.row_mut(r);
        let denom = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS);
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
}

impl OutcomeModel for RcfrModel {
    fn arms(&self) -> usize {
        self.arm_count()
    }

    fn predict(&self, x: &Matrix, t: &[usize]) -> Result<Vec<f64>> {
        RcfrModel::predict(self, x, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub rep_dim: usize,
    pub arms: usize,
    pub normalize_representation: bool,
    pub weight_normalization: WeightNormalization,
    pub final_alpha: f64,
    pub config: TrainConfig,
}

/// Serialized model: header plus one parameter document per network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub header: ModelHeader,
    pub rep_net: ParamDoc,
    pub heads: Vec<ParamDoc>,
    pub weight_net: ParamDoc,
}
