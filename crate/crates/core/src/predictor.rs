use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Anything that predicts an outcome for a context under a given arm.
pub trait OutcomeModel {
    fn arms(&self) -> usize;

    fn predict(&self, x: &Matrix, t: &[usize]) -> Result<Vec<f64>>;

    /// Predictions with every row assigned to `arm`.
    fn predict_arm(&self, x: &Matrix, arm: usize) -> Result<Vec<f64>> {
        self.predict(x, &vec![arm; x.rows()])
    }

    /// `τ̂(x) = f(x, 1) − f(x, 0)`.
    fn estimate_cate(&self, x: &Matrix) -> Result<Vec<f64>> {
        if self.arms() != 2 {
            return Err(Error::InvalidArgument(format!(
                "effect estimation needs a binary-arm model, this one has {} arms",
                self.arms()
            )));
        }
        let f1 = self.predict_arm(x, 1)?;
        let f0 = self.predict_arm(x, 0)?;
        Ok(f1.iter().zip(&f0).map(|(a, b)| a - b).collect())
    }
}
