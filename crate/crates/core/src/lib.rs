//! Deterministic simulator for a swarm of small bicopter blimps.
//!
//! The crate is organized the way the vehicles are: [`dynamics`] and
//! [`control`] model one blimp and its flight controller, [`perception`]
//! turns camera frames into balloon and goal detections, [`autonomy`] is the
//! per-blimp behavior state machine, and [`comms`] is the ground-station
//! radio link. [`world`] ties everything together on a fixed 5 ms timeline
//! and [`experiment`] runs the pickup and pickup-and-delivery protocols on
//! top of it.
//!
//! Runnable walkthroughs of each subsystem live in the crate's `examples/`
//! directory; `cargo run --example <name>` lists them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autonomy;
pub mod comms;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod experiment;
pub mod perception;
pub mod service;
pub mod training;
pub mod world;

pub use config::SimConfig;
pub use dynamics::{ActuatorCommand, BlimpParams, RigidState, Wrench};
pub use world::World;
