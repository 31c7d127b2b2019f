//! Weighted squared maximum mean discrepancy under an RBF kernel.
//!
//! The estimator is the biased V-statistic
//!
//! ```text
//! MMD² = (1/n²) wᵀ K_ss w − (2/(n m)) wᵀ K_st 1 + (1/m²) 1ᵀ K_tt 1
//! ```
//!
//! between a `w`-weighted source sample and a uniformly weighted target
//! sample. Weights are validated (positive, finite, right length) but never
//! renormalized here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{pairwise_sq_dists, sq_dist, Matrix};
use crate::par::*;
use crate::weights::check_positive;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub bandwidth: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { bandwidth: 1.0 }
    }
}

impl KernelConfig {
    pub fn new(bandwidth: f64) -> Result<Self> {
        let cfg = Self { bandwidth };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "kernel bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        Ok(())
    }

    /// `1 / σ²`
    fn inv_sq(&self) -> f64 {
        1.0 / (self.bandwidth * self.bandwidth)
    }

    #[inline]
    fn eval_sq(&self, d2: f64) -> f64 {
        (-0.5 * d2 * self.inv_sq()).exp()
    }
}

/// `exp(−‖aᵢ − bⱼ‖² / (2σ²))`.
pub fn rbf_gram(a: &Matrix, b: &Matrix, cfg: &KernelConfig) -> Result<Matrix> {
    cfg.validate()?;
    Ok(pairwise_sq_dists(a, b)?.map(|d2| cfg.eval_sq(d2)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mmd2Result {
    pub value: f64,
    /// Gradient with respect to every source coordinate.
    pub grad_src: Matrix,
    /// Gradient with respect to every target coordinate.
    pub grad_tgt: Matrix,
    pub grad_w: Vec<f64>,
}

fn check_inputs(z_src: &Matrix, w: &[f64], z_tgt: &Matrix, cfg: &KernelConfig) -> Result<()> {
    cfg.validate()?;
    if z_src.cols() != z_tgt.cols() {
        return Err(Error::Shape {
            op: "weighted_mmd2",
            left: z_src.shape(),
            right: z_tgt.shape(),
        });
    }
    if w.len() != z_src.rows() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} source rows",
            w.len(),
            z_src.rows()
        )));
    }
    if z_tgt.rows() == 0 {
        return Err(Error::InvalidArgument("empty target sample".into()));
    }
    check_positive(w)
}

/// Value and all gradients of the weighted MMD².
pub fn weighted_mmd2(z_src: &Matrix, w: &[f64], z_tgt: &Matrix, cfg: &KernelConfig) -> Result<Mmd2Result> {
    check_inputs(z_src, w, z_tgt, cfg)?;
    let (n, m, d) = (z_src.rows(), z_tgt.rows(), z_src.cols());
    let nf = n as f64;
    let mf = m as f64;
    let c = cfg.inv_sq();
    let kss = rbf_gram(z_src, z_src, cfg)?;
    let kst = rbf_gram(z_src, z_tgt, cfg)?;
    let ktt = rbf_gram(z_tgt, z_tgt, cfg)?;

    let mut ss = 0.0;
    let mut st = 0.0;
    let mut grad_w = vec![0.0; n];
    let mut grad_src = Matrix::zeros(n, d);
    let mut grad_tgt = Matrix::zeros(m, d);
    let a_ss = 1.0 / (nf * nf);
    let a_st = 2.0 / (nf * mf);
    let a_tt = 1.0 / (mf * mf);

    for i in 0..n {
        let si = z_src.row(i);
        let mut kw = 0.0;
        let mut krow = 0.0;
        let mut gi = vec![0.0; d];
        for j in 0..n {
            let k = kss.get(i, j);
            kw += w[j] * k;
            // d/ds_i of wᵢwⱼk(sᵢ,sⱼ), counted for both (i,j) and (j,i).
            let coef = 2.0 * a_ss * w[i] * w[j] * k * c;
            if coef != 0.0 {
                for (g, (a, b)) in gi.iter_mut().zip(si.iter().zip(z_src.row(j))) {
                    *g -= coef * (a - b);
                }
            }
        }
        for j in 0..m {
            let k = kst.get(i, j);
            krow += k;
            let coef = a_st * w[i] * k * c;
            let tj = z_tgt.row(j);
            for (g, (a, b)) in gi.iter_mut().zip(si.iter().zip(tj)) {
                *g += coef * (a - b);
            }
            for (g, (a, b)) in grad_tgt.row_mut(j).iter_mut().zip(tj.iter().zip(si)) {
                *g += coef * (a - b);
            }
        }
        ss += w[i] * kw;
        st += w[i] * krow;
        grad_w[i] = 2.0 * a_ss * kw - a_st * krow;
        grad_src.row_mut(i).copy_from_slice(&gi);
    }

    let mut tt = 0.0;
    for j in 0..m {
        let tj = z_tgt.row(j);
        let mut gj = vec![0.0; d];
        for l in 0..m {
            let k = ktt.get(j, l);
            tt += k;
            let coef = 2.0 * a_tt * k * c;
            for (g, (a, b)) in gj.iter_mut().zip(tj.iter().zip(z_tgt.row(l))) {
                *g -= coef * (a - b);
            }
        }
        for (g, v) in grad_tgt.row_mut(j).iter_mut().zip(gj) {
            *g += v;
        }
    }

    Ok(Mmd2Result {
        value: a_ss * ss - a_st * st + a_tt * tt,
        grad_src,
        grad_tgt,
        grad_w,
    })
}

/// Value only, streamed row by row without materializing Gram matrices.
/// Suited to large samples; rows are processed in parallel when enabled.
pub fn weighted_mmd2_value(z_src: &Matrix, w: &[f64], z_tgt: &Matrix, cfg: &KernelConfig) -> Result<f64> {
    check_inputs(z_src, w, z_tgt, cfg)?;
    let (n, m) = (z_src.rows() as f64, z_tgt.rows() as f64);
    // per-row partials are collected in order so the sum is reproducible
    let partials: Vec<(f64, f64)> = (0..z_src.rows())
        .into_par_iter()
        .map(|i| {
            let si = z_src.row(i);
            let mut kw = 0.0;
            for (j, wj) in w.iter().enumerate() {
                kw += wj * cfg.eval_sq(sq_dist(si, z_src.row(j)));
            }
            let mut kt = 0.0;
            for j in 0..z_tgt.rows() {
                kt += cfg.eval_sq(sq_dist(si, z_tgt.row(j)));
            }
            (w[i] * kw, w[i] * kt)
        })
        .collect();
    let (ss, st) = partials.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let tt = target_self_term(z_tgt, cfg);
    Ok(ss / (n * n) - 2.0 * st / (n * m) + tt / (m * m))
}

fn target_self_term(z_tgt: &Matrix, cfg: &KernelConfig) -> f64 {
    let rows: Vec<f64> = (0..z_tgt.rows())
        .into_par_iter()
        .map(|j| {
            let tj = z_tgt.row(j);
            (0..z_tgt.rows())
                .map(|l| cfg.eval_sq(sq_dist(tj, z_tgt.row(l))))
                .sum::<f64>()
        })
        .collect();
    rows.iter().sum()
}

/// MMD² as a function of the weights only, for a frozen pair of samples.
/// Gram terms are computed once; each evaluation costs `O(n²)`.
#[derive(Debug, Clone)]
pub struct WeightedMmd {
    kss: Matrix,
    kst_rowsum: Vec<f64>,
    tt: f64,
    m: usize,
}

impl WeightedMmd {
    pub fn new(z_src: &Matrix, z_tgt: &Matrix, cfg: &KernelConfig) -> Result<Self> {
        check_inputs(z_src, &vec![1.0; z_src.rows()], z_tgt, cfg)?;
        let kss = rbf_gram(z_src, z_src, cfg)?;
        let kst = rbf_gram(z_src, z_tgt, cfg)?;
        let kst_rowsum = (0..kst.rows()).map(|i| kst.row(i).iter().sum()).collect();
        Ok(Self {
            kss,
            kst_rowsum,
            tt: target_self_term(z_tgt, cfg),
            m: z_tgt.rows(),
        })
    }

    pub fn source_len(&self) -> usize {
        self.kss.rows()
    }

    /// `(value, ∂value/∂w)`.
    pub fn eval(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.kss.rows();
        if w.len() != n {
            return Err(Error::InvalidWeights(format!("{} weights for {n} source rows", w.len())));
        }
        check_positive(w)?;
        let (nf, mf) = (n as f64, self.m as f64);
        let mut ss = 0.0;
        let mut st = 0.0;
        let mut grad = vec![0.0; n];
        for i in 0..n {
            let kw: f64 = self.kss.row(i).iter().zip(w).map(|(k, wj)| k * wj).sum();
            ss += w[i] * kw;
            st += w[i] * self.kst_rowsum[i];
            grad[i] = 2.0 * kw / (nf * nf) - 2.0 * self.kst_rowsum[i] / (nf * mf);
        }
        let value = ss / (nf * nf) - 2.0 * st / (nf * mf) + self.tt / (mf * mf);
        Ok((value, grad))
    }
}
