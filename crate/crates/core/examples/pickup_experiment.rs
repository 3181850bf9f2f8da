//! Attempts per run against swarm size, a small version of the pickup grid.
//! Usage: pickup_experiment [seeds] [seconds]

use blimpswarm::experiment::{median, run_pickup_experiment, seeds};
use blimpswarm::SimConfig;

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(4);
    let secs: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(120.0);
    let cfg = SimConfig::default();
    let seeds = seeds(&cfg, n);
    for blimps in 1..=4 {
        let rows = run_pickup_experiment(&cfg, blimps, 8, secs, &seeds).unwrap();
        let attempts: Vec<u64> = rows.iter().map(|r| r.attempts).collect();
        let successes: u64 = rows.iter().map(|r| r.successes).sum();
        println!("{blimps} blimps: attempts {attempts:?}, median {}, captures {successes}", median(&attempts));
    }
}
