//! Re-weighted counterfactual regression.
//!
//! A representation network Φ, one hypothesis head per arm and a weight
//! network w(Φ, t) trained by alternating the h/Φ and w objectives; see
//! [`train::fit`].

mod alpha;
mod config;
mod model;
mod objective;
mod train;

pub use alpha::{adaptive_alpha, lipschitz_estimate, AlphaState};
pub use config::{AlphaMode, Architecture, EarlyStopping, TrainConfig, WeightNormalization, ALPHA_MAX, ALPHA_MIN};
pub use model::{ModelDocument, ModelHeader, RcfrModel, NORM_EPS, WEIGHT_FLOOR};
pub use objective::{
    balancing_ipm_value, full_objective, objective_h_phi, objective_w, weighted_factual_risk, HPhiOutput, WObjective, WOutput,
};
pub use train::{fit, fit_fixed_weights, fit_with, sample_risk, EpochRecord, TrainHistory, Trainer, Weighting};

#[cfg(test)]
mod tests;
