//! Pickup and pickup-and-delivery protocols over many seeds.
//!
//! Runs are independent worlds, so seeds are spread over threads; rows are
//! always reported in seed order, which keeps the CSV byte-identical no
//! matter how the work was scheduled.

use crate::config::{check_counts, ConfigError, SimConfig};
use crate::world::{Scenario, World, WorldError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

pub const CSV_HEADER: &str = "seed,n_blimps,n_balloons,attempts,successes,deliveries";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed {seed}: {source}")]
    World { seed: u64, source: WorldError },
}

/// One run's counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub seed: u64,
    pub n_blimps: usize,
    pub n_balloons: usize,
    pub attempts: u64,
    pub successes: u64,
    pub deliveries: u64,
}

/// Runs one world for `duration` simulated seconds.
pub fn run_once(
    cfg: &SimConfig,
    n_blimps: usize,
    n_balloons: usize,
    scenario: Scenario,
    duration: f64,
    seed: u64,
) -> Result<Metrics, ExperimentError> {
    let setup = cfg.setup(n_blimps, n_balloons, scenario, seed)?;
    let world_err = |source| ExperimentError::World { seed, source };
    let mut world = World::new(setup, None).map_err(world_err)?;
    world.run_for(duration).map_err(world_err)?;
    let c = world.counters;
    Ok(Metrics { seed, n_blimps, n_balloons, attempts: c.attempts, successes: c.successes, deliveries: c.deliveries })
}

fn run_seeds(
    cfg: &SimConfig,
    n_blimps: usize,
    n_balloons: usize,
    scenario: Scenario,
    duration: f64,
    seeds: &[u64],
) -> Result<Vec<Metrics>, ExperimentError> {
    check_counts(n_blimps, n_balloons)?;
    seeds.par_iter().map(|&s| run_once(cfg, n_blimps, n_balloons, scenario, duration, s)).collect()
}

/// Pickup protocol: captures bench the blimp for the handling delay, then
/// blimp and balloon are redeployed.
pub fn run_pickup_experiment(
    cfg: &SimConfig,
    n_blimps: usize,
    n_balloons: usize,
    duration: f64,
    seeds: &[u64],
) -> Result<Vec<Metrics>, ExperimentError> {
    run_seeds(cfg, n_blimps, n_balloons, Scenario::Pickup, duration, seeds)
}

/// Pickup-and-delivery protocol: captured balloons are carried to a hoop.
pub fn run_delivery_experiment(
    cfg: &SimConfig,
    n_blimps: usize,
    n_balloons: usize,
    duration: f64,
    seeds: &[u64],
) -> Result<Vec<Metrics>, ExperimentError> {
    run_seeds(cfg, n_blimps, n_balloons, Scenario::Delivery, duration, seeds)
}

pub fn seeds(cfg: &SimConfig, n: usize) -> Vec<u64> {
    (0..n as u64).map(|k| cfg.experiment.first_seed + k).collect()
}

/// Every pickup cell of the configured grid, blimps-major.
pub fn run_pickup_grid(cfg: &SimConfig, n_seeds: usize) -> Result<Vec<Metrics>, ExperimentError> {
    let grid = &cfg.experiment.pickup;
    let seeds = seeds(cfg, n_seeds);
    let mut rows = Vec::new();
    for &b in &grid.n_blimps {
        for &n in &grid.n_balloons {
            rows.extend(run_pickup_experiment(cfg, b, n, grid.duration, &seeds)?);
        }
    }
    Ok(rows)
}

/// The configured delivery runs; empty when the config disables them.
pub fn run_delivery_runs(cfg: &SimConfig, n_seeds: usize) -> Result<Vec<Metrics>, ExperimentError> {
    match &cfg.experiment.delivery {
        Some(d) => run_delivery_experiment(cfg, d.n_blimps, d.n_balloons, d.duration, &seeds(cfg, n_seeds)),
        None => Ok(Vec::new()),
    }
}

pub fn to_csv(rows: &[Metrics]) -> String {
    let mut out = String::with_capacity(32 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.seed, r.n_blimps, r.n_balloons, r.attempts, r.successes, r.deliveries);
    }
    out
}

/// Median of a column; the mean of the middle pair for even counts.
pub fn median(values: &[u64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        0.5 * (v[m - 1] + v[m]) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> SimConfig {
        let mut c = SimConfig::default();
        c.experiment.pickup.duration = 2.0;
        c
    }

    #[test]
    fn csv_layout() {
        let m = Metrics { seed: 4, n_blimps: 2, n_balloons: 8, attempts: 11, successes: 3, deliveries: 0 };
        assert_eq!(to_csv(&[m]), format!("{CSV_HEADER}\n4,2,8,11,3,0\n"));
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[5, 1, 3]), 3.0);
        assert_eq!(median(&[4, 1, 3, 2]), 2.5);
    }

    #[test]
    fn counts_are_range_checked() {
        let c = short();
        assert!(matches!(run_pickup_experiment(&c, 5, 1, 1.0, &[1]), Err(ExperimentError::Config(_))));
        assert!(matches!(run_pickup_experiment(&c, 1, 9, 1.0, &[1]), Err(ExperimentError::Config(_))));
        assert!(matches!(run_pickup_experiment(&c, 0, 1, 1.0, &[1]), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn rows_follow_the_seeds() {
        let c = short();
        let rows = run_pickup_experiment(&c, 1, 1, 1.0, &[9, 3, 5]).unwrap();
        assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![9, 3, 5]);
    }
}
