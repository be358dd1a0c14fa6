use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::episode::{EnvConfig, EpisodeError, PolicyKind};
use super::stats::{run_batch, BatchStats};
use crate::model::GenerativeModel;

/// Statistics of one (strategy, hold probability) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub strategy: String,
    pub p_hold: f64,
    pub stats: BatchStats,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SweepError {
    #[error("the model declares no hold preference")]
    NoHoldPreference,
    #[error("hold probability {0} is outside [0, 1]")]
    Probability(String),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

/// `n` evenly spaced values from 0 to 1 inclusive.
pub fn linspace(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// For each strategy and each grid value, run a batch where the hold
/// preference is drawn with that probability. The planner's prior is set to
/// the same value. Every cell uses `base_seed`, so strategies face the same
/// sequence of environments.
pub fn preference_sweep(
    model: &GenerativeModel,
    strategies: &[PolicyKind],
    p_grid: &[f64],
    n_per_point: usize,
    env: &EnvConfig,
    base_seed: u64,
) -> Result<Vec<SweepCell>, SweepError> {
    let hold = model.hold_preference().ok_or(SweepError::NoHoldPreference)?;
    if let Some(p) = p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(SweepError::Probability(p.to_string()));
    }
    let mut cells = Vec::with_capacity(strategies.len() * p_grid.len());
    for strategy in strategies {
        for &p in p_grid {
            let mut prior = model.pref_prior().to_vec();
            prior[hold.0 as usize] = p;
            let cell_model = model.with_pref_prior(prior);
            let batch = run_batch(&cell_model, strategy, n_per_point, env, base_seed)?;
            cells.push(SweepCell {
                strategy: strategy.id().to_string(),
                p_hold: p,
                stats: batch.stats,
            });
        }
    }
    Ok(cells)
}
