//! One delivery run with four blimps and eight balloons, printing the
//! world's event log.
//! Usage: delivery_run [seed] [seconds]

use blimpswarm::world::{Scenario, WorldSetup};
use blimpswarm::World;

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let secs: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(300.0);
    let mut w = World::new(WorldSetup::new(4, 8, Scenario::Delivery, seed), None).unwrap();
    w.run_for(secs).unwrap();
    for (t, what) in &w.log {
        println!("{t:>6.1} s {what:?}");
    }
    let (free, captured, delivered) = w.balloon_census();
    println!("{:?}", w.counters);
    println!("balloons: {free} free, {captured} held, {delivered} delivered; digest {}", w.digest());
}
