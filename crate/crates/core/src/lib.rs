pub mod baselines;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod ipm;
pub mod nn;
pub mod numerics;
pub mod par;
pub mod predictor;
pub mod rcfr;
pub mod weights;

pub use error::{Error, Result};
pub use predictor::OutcomeModel;
