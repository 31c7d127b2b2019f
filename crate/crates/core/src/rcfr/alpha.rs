use crate::error::{Error, Result};
use crate::numerics::{sq_dist, Matrix};

use super::config::{ALPHA_MAX, ALPHA_MIN};

/// Pairs closer than this in input space are skipped.
const MIN_PAIR_DISTANCE: f64 = 1e-8;

/// Exponential moving average of the balance coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaState {
    pub alpha: f64,
    pub decay: f64,
    pub updates: u64,
}

impl AlphaState {
    pub fn new(initial: f64, decay: f64) -> Self {
        Self {
            alpha: initial.clamp(ALPHA_MIN, ALPHA_MAX),
            decay,
            updates: 0,
        }
    }
}

/// `max_{i,j} |ℓᵢ − ℓⱼ| / ‖xᵢ − xⱼ‖₂` over pairs at least `1e−8` apart;
/// `None` when every pair is degenerate.
pub fn lipschitz_estimate(losses: &[f64], x: &Matrix) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..losses.len() {
        for j in i + 1..losses.len() {
            let d = sq_dist(x.row(i), x.row(j)).sqrt();
            if d < MIN_PAIR_DISTANCE {
                continue;
            }
            let r = (losses[i] - losses[j]).abs() / d;
            best = Some(best.map_or(r, |b: f64| b.max(r)));
        }
    }
    best
}

/// Blend a fresh Lipschitz estimate into the running α:
/// `α ← decay·α + (1 − decay)·raw`, clamped to `[1e−6, 1e4]`.
pub fn adaptive_alpha(state: &AlphaState, losses: &[f64], x: &Matrix) -> Result<AlphaState> {
    if losses.len() != x.rows() {
        return Err(Error::InvalidArgument(format!("{} losses for {} rows", losses.len(), x.rows())));
    }
    let Some(raw) = lipschitz_estimate(losses, x) else {
        return Ok(*state);
    };
    let alpha = (state.decay * state.alpha + (1.0 - state.decay) * raw).clamp(ALPHA_MIN, ALPHA_MAX);
    Ok(AlphaState {
        alpha,
        decay: state.decay,
        updates: state.updates + 1,
    })
}
