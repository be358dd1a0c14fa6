//! Offline experiments: benchmark task models, an episode runner that pairs
//! any policy with the simulated builder, batch statistics, and the
//! preference sweep.

pub mod benchmarks;
mod episode;
pub mod report;
mod stats;
mod sweep;

pub use benchmarks::{build_benchmark, Benchmark, BenchmarkError, BenchmarkParams};
pub use episode::{
    run_episode, run_policy_episode, EnvConfig, EpisodeError, EpisodeRecord, PolicyKind, PomcpPolicy, TraceRow,
    UnknownPolicy,
};
pub use stats::{mann_whitney, quantile, run_batch, Batch, BatchStats, RankTest};
pub use sweep::{linspace, preference_sweep, SweepCell, SweepError};
