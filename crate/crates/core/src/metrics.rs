//! Delivery and energy metrics, episode rows and summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coordination::Mode;
use crate::engine::{BatchResult, EpisodeRecord, RunResult, Termination};
use crate::error::{Error, Result};

/// 100 × mean delivered fraction over sources at termination.
pub fn delivery_pct(record: &EpisodeRecord) -> f64 {
    if record.delivered.is_empty() {
        return 0.0;
    }
    100.0 * record.delivered.iter().sum::<f64>() / record.delivered.len() as f64
}

/// 100 × mean consumed fraction over relays that transmitted at least once.
pub fn energy_pct(record: &EpisodeRecord) -> f64 {
    let active: Vec<f64> = record
        .relays
        .iter()
        .filter(|r| r.active())
        .map(|r| r.consumed_fraction)
        .collect();
    if active.is_empty() {
        0.0
    } else {
        100.0 * active.iter().sum::<f64>() / active.len() as f64
    }
}

/// Whether episode wall-clock time goes into output rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Timing {
    #[default]
    Wall,
    /// Written as 0 so outputs are byte-reproducible.
    Off,
}

/// One line of the episodes CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub mode: Mode,
    pub relay_count: usize,
    pub run: u32,
    pub episode: u32,
    pub termination: Termination,
    pub steps: u64,
    pub delivery_pct: f64,
    pub energy_pct: f64,
    pub reward_sum: f64,
    pub time_ms: f64,
}

impl EpisodeRow {
    pub fn from_record(run: &RunResult, e: &EpisodeRecord, timing: Timing) -> Self {
        EpisodeRow {
            mode: run.mode,
            relay_count: run.relay_count,
            run: run.run,
            episode: e.episode,
            termination: e.termination,
            steps: e.steps,
            delivery_pct: delivery_pct(e),
            energy_pct: energy_pct(e),
            reward_sum: e.reward_sum(),
            time_ms: match timing {
                Timing::Wall => e.wall_ms,
                Timing::Off => 0.0,
            },
        }
    }
}

pub fn episode_rows(batch: &BatchResult, timing: Timing) -> Vec<EpisodeRow> {
    batch
        .runs
        .iter()
        .flat_map(|r| r.episodes.iter().map(move |e| EpisodeRow::from_record(r, e, timing)))
        .collect()
}

/// One line of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: Mode,
    pub relay_count: usize,
    pub delivery_mean: f64,
    pub delivery_sd: f64,
    pub energy_mean: f64,
    pub energy_sd: f64,
    /// Per-run total time, mean and sd over runs.
    pub time_mean_ms: f64,
    pub time_sd_ms: f64,
    pub per_agent_time_ms: f64,
    /// Episodes pooled for delivery and energy.
    pub episodes: usize,
    pub runs: usize,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Pools the last `last_k` episodes of every run per (mode, relay_count).
/// Rows come out sorted by mode, then relay count.
pub fn aggregate(rows: &[EpisodeRow], last_k: u32) -> Result<Vec<SummaryRow>> {
    if last_k == 0 {
        return Err(Error::config("`last_k` must be >= 1"));
    }
    // (mode, relays) -> run -> rows
    let mut groups: BTreeMap<(Mode, usize), BTreeMap<u32, Vec<&EpisodeRow>>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.mode, r.relay_count))
            .or_default()
            .entry(r.run)
            .or_default()
            .push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((mode, relay_count), runs) in groups {
        let mut delivery = Vec::new();
        let mut energy = Vec::new();
        let mut times = Vec::new();
        for (run, mut eps) in runs.iter().map(|(k, v)| (*k, v.clone())) {
            let n = eps.len() as u32;
            if last_k > n {
                return Err(Error::config(format!(
                    "`last_k` = {last_k} exceeds the {n} episodes of {mode} relays={relay_count} run={run}"
                )));
            }
            eps.sort_by_key(|e| e.episode);
            times.push(eps.iter().map(|e| e.time_ms).sum::<f64>());
            for e in &eps[(n - last_k) as usize..] {
                delivery.push(e.delivery_pct);
                energy.push(e.energy_pct);
            }
        }
        let (delivery_mean, delivery_sd) = mean_sd(&delivery);
        let (energy_mean, energy_sd) = mean_sd(&energy);
        let (time_mean_ms, time_sd_ms) = mean_sd(&times);
        out.push(SummaryRow {
            mode,
            relay_count,
            delivery_mean,
            delivery_sd,
            energy_mean,
            energy_sd,
            time_mean_ms,
            time_sd_ms,
            per_agent_time_ms: time_mean_ms / relay_count as f64,
            episodes: delivery.len(),
            runs: runs.len(),
        });
    }
    Ok(out)
}

pub fn aggregate_batch(batch: &BatchResult, last_k: u32, timing: Timing) -> Result<Vec<SummaryRow>> {
    aggregate(&episode_rows(batch, timing), last_k)
}
