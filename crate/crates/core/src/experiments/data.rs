use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Labeled sample from the source design.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSample {
    pub x: Matrix,
    pub t: Vec<usize>,
    pub y: Vec<f64>,
}

impl SourceSample {
    pub fn new(x: Matrix, t: Vec<usize>, y: Vec<f64>) -> Result<Self> {
        if t.len() != x.rows() || y.len() != x.rows() {
            return Err(Error::InvalidArgument(format!(
                "source sample has {} rows, {} arms and {} outcomes",
                x.rows(),
                t.len(),
                y.len()
            )));
        }
        Ok(Self { x, t, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Number of arms implied by the largest label.
    pub fn arms(&self) -> usize {
        self.t.iter().copied().max().map_or(0, |a| a + 1)
    }

    pub fn subset(&self, idx: &[usize]) -> SourceSample {
        SourceSample {
            x: self.x.select_rows(idx),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Unlabeled sample from the target design.
///
/// Outcomes may be attached for evaluation, but they are only reachable
/// through [`TargetSample::hidden_outcomes_for_evaluation`]; training code
/// never calls it.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSample {
    pub x: Matrix,
    pub t: Vec<usize>,
    hidden_y: Option<Vec<f64>>,
}

impl TargetSample {
    pub fn new(x: Matrix, t: Vec<usize>) -> Result<Self> {
        if t.len() != x.rows() {
            return Err(Error::InvalidArgument(format!(
                "target sample has {} rows but {} arms",
                x.rows(),
                t.len()
            )));
        }
        Ok(Self { x, t, hidden_y: None })
    }

    pub fn with_hidden_outcomes(x: Matrix, t: Vec<usize>, y: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(x, t)?;
        if y.len() != s.x.rows() {
            return Err(Error::InvalidArgument(format!(
                "{} hidden outcomes for {} target rows",
                y.len(),
                s.x.rows()
            )));
        }
        s.hidden_y = Some(y);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn hidden_outcomes_for_evaluation(&self) -> Option<&[f64]> {
        self.hidden_y.as_deref()
    }

    /// Same contexts and arms with any hidden outcomes dropped.
    pub fn unlabeled(&self) -> TargetSample {
        TargetSample {
            x: self.x.clone(),
            t: self.t.clone(),
            hidden_y: None,
        }
    }
}

/// Binary-treatment data with optional ground truth for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateDataset {
    pub x: Matrix,
    pub t: Vec<usize>,
    pub y_factual: Vec<f64>,
    pub y_cfactual: Option<Vec<f64>>,
    pub mu0: Option<Vec<f64>>,
    pub mu1: Option<Vec<f64>>,
}

impl CateDataset {
    pub fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        let bad_len = |v: &Option<Vec<f64>>| v.as_ref().is_some_and(|v| v.len() != n);
        if self.t.len() != n || self.y_factual.len() != n || bad_len(&self.y_cfactual) || bad_len(&self.mu0) || bad_len(&self.mu1) {
            return Err(Error::InvalidArgument("dataset columns have inconsistent lengths".into()));
        }
        if let Some((i, t)) = self.t.iter().enumerate().find(|(_, &t)| t > 1) {
            return Err(Error::InvalidArgument(format!("row {i}: treatment {t} is not binary")));
        }
        if self.mu0.is_some() != self.mu1.is_some() {
            return Err(Error::InvalidArgument("mu0 and mu1 must be given together".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// `τ(xᵢ) = mu1ᵢ − mu0ᵢ`, when ground truth is present.
    pub fn true_effects(&self) -> Option<Vec<f64>> {
        let (m0, m1) = (self.mu0.as_ref()?, self.mu1.as_ref()?);
        Some(m1.iter().zip(m0).map(|(a, b)| a - b).collect())
    }

    pub fn subset(&self, idx: &[usize]) -> CateDataset {
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        CateDataset {
            x: self.x.select_rows(idx),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            y_factual: pick(&self.y_factual),
            y_cfactual: self.y_cfactual.as_ref().map(pick),
            mu0: self.mu0.as_ref().map(pick),
            mu1: self.mu1.as_ref().map(pick),
        }
    }

    /// Factual view used for training.
    pub fn factual(&self) -> SourceSample {
        SourceSample {
            x: self.x.clone(),
            t: self.t.clone(),
            y: self.y_factual.clone(),
        }
    }
}
