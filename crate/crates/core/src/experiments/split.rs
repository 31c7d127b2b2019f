use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Fractions of rows used for fitting and early stopping; the rest is test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: f64,
    pub validation: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.63,
            validation: 0.27,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v < 1.0;
        if !ok(self.train) || !ok(self.validation) || self.train + self.validation >= 1.0 {
            return Err(Error::Config(format!(
                "split fractions must be positive and leave a test share, got train {} and validation {}",
                self.train, self.validation
            )));
        }
        Ok(())
    }

    /// Seeded permutation cut into train / validation / test; every part
    /// gets at least one row.
    pub fn split(&self, n: usize, rng: &mut Rng) -> Result<Split> {
        self.validate()?;
        if n < 3 {
            return Err(Error::InvalidArgument(format!("cannot split {n} rows three ways")));
        }
        let n_train = ((n as f64 * self.train).round() as usize).clamp(1, n - 2);
        let n_val = ((n as f64 * self.validation).round() as usize).clamp(1, n - n_train - 1);
        let perm = rng.permutation(n);
        let mut parts = [
            perm[..n_train].to_vec(),
            perm[n_train..n_train + n_val].to_vec(),
            perm[n_train + n_val..].to_vec(),
        ];
        for p in &mut parts {
            p.sort_unstable();
        }
        let [train, validation, test] = parts;
        Ok(Split { train, validation, test })
    }
}
