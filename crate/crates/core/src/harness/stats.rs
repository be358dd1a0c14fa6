use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::episode::{run_policy_episode, EnvConfig, EpisodeError, EpisodeRecord, PolicyKind};
use crate::model::GenerativeModel;
use crate::rng::episode_seed;

/// Return distribution of one policy over a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub policy: String,
    /// In episode order.
    pub returns: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single episode).
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub terminated: usize,
}

impl BatchStats {
    pub fn from_returns(policy: &str, returns: Vec<f64>, terminated: usize) -> Self {
        assert!(!returns.is_empty(), "a batch needs at least one episode");
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let std = if returns.len() > 1 {
            (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = returns.clone();
        sorted.sort_by(f64::total_cmp);
        BatchStats {
            policy: policy.to_string(),
            mean,
            std,
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
            terminated,
            returns,
        }
    }

    pub fn n(&self) -> usize {
        self.returns.len()
    }
}

/// Linear interpolation between closest ranks.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub stats: BatchStats,
    pub episodes: Vec<EpisodeRecord>,
}

/// Run `n` independent episodes in parallel. Episode `i` uses seed
/// `episode_seed(base_seed, i)`, so results do not depend on scheduling.
///
/// # Panics
/// If `n` is zero.
pub fn run_batch(
    model: &GenerativeModel,
    policy: &PolicyKind,
    n: usize,
    env: &EnvConfig,
    base_seed: u64,
) -> Result<Batch, EpisodeError> {
    assert!(n >= 1, "a batch needs at least one episode");
    let episodes: Vec<EpisodeRecord> = (0..n as u64)
        .into_par_iter()
        .map(|i| run_policy_episode(model, policy, env, episode_seed(base_seed, i)))
        .collect::<Result<_, _>>()?;
    let returns = episodes.iter().map(|e| e.total_return).collect();
    let terminated = episodes.iter().filter(|e| e.terminated).count();
    Ok(Batch {
        stats: BatchStats::from_returns(policy.id(), returns, terminated),
        episodes,
    })
}

/// Mann-Whitney U test result, normal approximation with tie and continuity
/// corrections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankTest {
    /// U statistic of the first sample.
    pub u: f64,
    pub z: f64,
    /// One-sided p-value for "the first sample tends to be larger".
    pub p_greater: f64,
}

pub fn mann_whitney(x: &[f64], y: &[f64]) -> RankTest {
    let n1 = x.len() as f64;
    let n2 = y.len() as f64;
    let mut all: Vec<(f64, bool)> = x.iter().map(|&v| (v, true)).chain(y.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_x += avg_rank * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_x - n1 * (n1 + 1.0) / 2.0;
    let n = n1 + n2;
    let mean = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        // every value tied
        return RankTest { u, z: 0.0, p_greater: 0.5 };
    }
    let z = (u - mean - 0.5) / var.sqrt();
    let p_greater = 1.0 - Normal::standard().cdf(z);
    RankTest { u, z, p_greater }
}
