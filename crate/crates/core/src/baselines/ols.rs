//! Per-arm (weighted) least squares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, solve_spd, Matrix};
use crate::predictor::OutcomeModel;
use crate::weights::WeightVector;

/// Diagonal term added to every normal-equation system.
pub const OLS_RIDGE: f64 = 1e-8;
/// Diagonal term used instead when an arm has no more rows than features.
pub const OLS_RIDGE_FALLBACK: f64 = 1e-3;

/// One linear regressor per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.coef.first().map_or(0, Vec::len)
    }
}

impl OutcomeModel for LinearModel {
    fn arms(&self) -> usize {
        self.coef.len()
    }

    fn predict(&self, x: &Matrix, t: &[usize]) -> Result<Vec<f64>> {
        if x.cols() != self.dim() || t.len() != x.rows() {
            return Err(Error::Shape {
                op: "linear predict",
                left: x.shape(),
                right: (t.len(), self.dim()),
            });
        }
        t.iter()
            .enumerate()
            .map(|(i, &a)| match self.coef.get(a) {
                Some(beta) => Ok(dot(x.row(i), beta) + self.intercept[a]),
                None => Err(Error::InvalidArgument(format!("row {i}: arm {a} unknown to a {}-arm model", self.coef.len()))),
            })
            .collect()
    }
}

/// Unweighted per-arm least squares.
pub fn ols_fit(x: &Matrix, t: &[usize], y: &[f64]) -> Result<LinearModel> {
    fit(x, t, y, None)
}

/// Per-arm least squares minimizing `Σ wᵢ (xᵢᵀβ_t + γ_t − yᵢ)²`.
pub fn ols_weighted_fit(x: &Matrix, t: &[usize], y: &[f64], w: &WeightVector) -> Result<LinearModel> {
    if w.len() != x.rows() {
        return Err(Error::InvalidWeights(format!("{} weights for {} rows", w.len(), x.rows())));
    }
    fit(x, t, y, Some(w.values()))
}

fn fit(x: &Matrix, t: &[usize], y: &[f64], w: Option<&[f64]>) -> Result<LinearModel> {
    let n = x.rows();
    if t.len() != n || y.len() != n {
        return Err(Error::InvalidArgument(format!("{n} rows, {} arms, {} outcomes", t.len(), y.len())));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("cannot fit an empty sample".into()));
    }
    let d = x.cols();
    let p = d + 1;
    let arms = t.iter().copied().max().map_or(0, |a| a + 1);
    let mut coef = Vec::with_capacity(arms);
    let mut intercept = Vec::with_capacity(arms);
    for arm in 0..arms {
        let rows: Vec<usize> = (0..n).filter(|&i| t[i] == arm).collect();
        if rows.is_empty() {
            return Err(Error::InvalidArgument(format!("arm {arm} has no rows")));
        }
        let mut a = Matrix::zeros(p, p);
        let mut b = vec![0.0; p];
        let mut z = vec![1.0; p];
        for &i in &rows {
            z[..d].copy_from_slice(x.row(i));
            let wi = w.map_or(1.0, |w| w[i]);
            for r in 0..p {
                let s = wi * z[r];
                b[r] += s * y[i];
                for c in 0..p {
                    a.data_mut()[r * p + c] += s * z[c];
                }
            }
        }
        let ridge = if rows.len() > d { OLS_RIDGE } else { OLS_RIDGE_FALLBACK };
        for r in 0..p {
            a.data_mut()[r * p + r] += ridge;
        }
        let sol = solve_spd(&a, &b).map_err(|e| Error::Singular(format!("arm {arm}: {e}")))?;
        intercept.push(sol[d]);
        coef.push(sol[..d].to_vec());
    }
    Ok(LinearModel { coef, intercept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_matrix, Rng};
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn noiseless_line_is_recovered() {
        let x = gaussian_matrix(&mut Rng::new(1), 30, 1, &[0.0], 1.0).unwrap();
        let y: Vec<f64> = x.data().iter().map(|v| 2.0 * v + 1.0).collect();
        let m = ols_fit(&x, &[0; 30], &y).unwrap();
        assert!((m.coef[0][0] - 2.0).abs() < 1e-6);
        assert!((m.intercept[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn two_points_through_origin() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let m = ols_fit(&x, &[0, 0], &[0.0, 1.0]).unwrap();
        assert!((m.coef[0][0] - 1.0).abs() < 1e-6);
        assert!(m.intercept[0].abs() < 1e-6);
    }

    #[test]
    fn unit_weights_reduce_to_plain_fit() {
        let mut rng = Rng::new(2);
        let x = gaussian_matrix(&mut rng, 40, 3, &[0.0; 3], 1.0).unwrap();
        let t: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let y: Vec<f64> = (0..40).map(|_| rng.normal()).collect();
        let plain = ols_fit(&x, &t, &y).unwrap();
        let weighted = ols_weighted_fit(&x, &t, &y, &WeightVector::uniform(40)).unwrap();
        for (a, b) in plain.coef.iter().flatten().chain(&plain.intercept).zip(weighted.coef.iter().flatten().chain(&weighted.intercept)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    fn oracle(x: &Matrix, y: &[f64], w: &[f64]) -> Vec<f64> {
        let (n, d) = x.shape();
        let design = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x.get(i, j) } else { 1.0 });
        let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
        let lhs = design.transpose() * &wm * &design + DMatrix::identity(d + 1, d + 1) * OLS_RIDGE;
        let rhs = design.transpose() * &wm * DVector::from_column_slice(y);
        lhs.lu().solve(&rhs).expect("invertible").iter().copied().collect()
    }

    #[test]
    fn matches_normal_equation_oracle() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let x = gaussian_matrix(&mut rng, 5, 3, &[0.0; 3], 1.0).unwrap();
            let y: Vec<f64> = (0..5).map(|_| 3.0 * rng.normal()).collect();
            let raw: Vec<f64> = (0..5).map(|_| 0.2 + rng.uniform()).collect();
            let w = WeightVector::from_raw(raw).unwrap();
            for (weights, m) in [
                (vec![1.0; 5], ols_fit(&x, &[0; 5], &y).unwrap()),
                (w.values().to_vec(), ols_weighted_fit(&x, &[0; 5], &y, &w).unwrap()),
            ] {
                let expect = oracle(&x, &y, &weights);
                for (a, b) in m.coef[0].iter().chain(&m.intercept).zip(&expect) {
                    assert!((a - b).abs() < 1e-8, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn arms_are_fit_separately() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [0.0], [1.0]]).unwrap();
        let m = ols_fit(&x, &[0, 0, 1, 1], &[0.0, 1.0, 5.0, 3.0]).unwrap();
        let cate = m.estimate_cate(&Matrix::from_rows(&[[0.0], [1.0]]).unwrap()).unwrap();
        assert!((cate[0] - 5.0).abs() < 1e-6 && (cate[1] - 2.0).abs() < 1e-6);
        assert!(ols_fit(&x, &[0, 0, 2, 2], &[0.0; 4]).is_err());
        assert!(m.predict(&x, &[0, 0, 0, 3]).is_err());
    }

    #[test]
    fn underdetermined_arm_uses_ridge() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let m = ols_fit(&x, &[0], &[4.0]).unwrap();
        let p = m.predict(&x, &[0]).unwrap()[0];
        assert!(p.is_finite() && (p - 4.0).abs() < 0.01);
    }
}
