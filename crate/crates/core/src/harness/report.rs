//! CSV and line-delimited JSON output.
//!
//! Column sets are fixed; numbers are written with six decimals so reruns are
//! byte-identical.
//!
//! | file     | columns |
//! |----------|---------|
//! | episodes | `policy,episode,seed,instance,return,steps,terminated` |
//! | summary  | `policy,n,mean,std,min,q1,median,q3,max,terminated` |
//! | sweep    | `strategy,p_hold,n,mean,std,min,median,max` |
//!
//! `episode` counts from 0 within each policy, so several batches can share a
//! file. Traces are one JSON object per step:
//! `{"policy","episode","step","action","observation","reward","pref_estimates"}`.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use super::episode::EpisodeRecord;
use super::stats::BatchStats;
use super::sweep::SweepCell;

pub const EPISODE_COLUMNS: [&str; 7] = ["policy", "episode", "seed", "instance", "return", "steps", "terminated"];
pub const SUMMARY_COLUMNS: [&str; 10] = [
    "policy", "n", "mean", "std", "min", "q1", "median", "q3", "max", "terminated",
];
pub const SWEEP_COLUMNS: [&str; 8] = ["strategy", "p_hold", "n", "mean", "std", "min", "median", "max"];

pub fn fmt_f64(v: f64) -> String {
    let s = format!("{v:.6}");
    // avoid "-0.000000"
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

#[derive(Default)]
struct EpisodeIndex<'a>(HashMap<&'a str, usize>);

impl<'a> EpisodeIndex<'a> {
    fn next(&mut self, policy: &'a str) -> usize {
        let n = self.0.entry(policy).or_insert(0);
        *n += 1;
        *n - 1
    }
}

pub fn write_episodes<W: Write>(out: W, episodes: &[EpisodeRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EPISODE_COLUMNS)?;
    let mut index = EpisodeIndex::default();
    for e in episodes {
        let i = index.next(&e.policy);
        w.write_record([
            e.policy.clone(),
            i.to_string(),
            e.seed.to_string(),
            e.instance.to_string(),
            fmt_f64(e.total_return),
            e.steps.to_string(),
            e.terminated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(out: W, stats: &[BatchStats]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for s in stats {
        w.write_record([
            s.policy.clone(),
            s.n().to_string(),
            fmt_f64(s.mean),
            fmt_f64(s.std),
            fmt_f64(s.min),
            fmt_f64(s.q1),
            fmt_f64(s.median),
            fmt_f64(s.q3),
            fmt_f64(s.max),
            s.terminated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep<W: Write>(out: W, cells: &[SweepCell]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for c in cells {
        w.write_record([
            c.strategy.clone(),
            fmt_f64(c.p_hold),
            c.stats.n().to_string(),
            fmt_f64(c.stats.mean),
            fmt_f64(c.stats.std),
            fmt_f64(c.stats.min),
            fmt_f64(c.stats.median),
            fmt_f64(c.stats.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceLine<'a> {
    policy: &'a str,
    episode: usize,
    step: usize,
    action: &'a str,
    observation: &'a str,
    reward: f64,
    pref_estimates: Option<&'a [f64]>,
}

pub fn write_traces<W: Write>(mut out: W, episodes: &[EpisodeRecord]) -> std::io::Result<()> {
    let mut index = EpisodeIndex::default();
    for e in episodes {
        let i = index.next(&e.policy);
        for (k, row) in e.trace.iter().enumerate() {
            let line = TraceLine {
                policy: &e.policy,
                episode: i,
                step: k,
                action: &row.action,
                observation: &row.observation,
                reward: row.reward,
                pref_estimates: row.pref_estimates.as_deref(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format() {
        assert_eq!(fmt_f64(1.0), "1.000000");
        assert_eq!(fmt_f64(-0.0), "0.000000");
        assert_eq!(fmt_f64(-1e-9), "0.000000");
        assert_eq!(fmt_f64(-312.5), "-312.500000");
    }
}
