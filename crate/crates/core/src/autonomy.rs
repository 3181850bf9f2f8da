//! Per-blimp behavior state machine.
//!
//! ```text
//!   RandomWalk --(N consecutive detections)--> MoveToGoal
//!   MoveToGoal --(target big enough)--> PassThroughGoal
//!   MoveToGoal --(target lost)--> RandomWalk
//!   PassThroughGoal --(timeout | capture | delivery)--> RandomWalk
//!   any --(central command)--> any
//! ```
//!
//! The objective is the balloon until one is captured, then the goal.

use crate::control::{ManualCommand, ServoTarget, TargetKind};
use crate::perception::{Detection, GoalDetection};
use rand::Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
pub enum Mode {
    Manual,
    RandomWalk,
    MoveToGoal,
    PassThroughGoal,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Manual, Mode::RandomWalk, Mode::MoveToGoal, Mode::PassThroughGoal];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Mode> {
        Mode::ALL.get(code as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct AutonomyParams {
    /// Consecutive detections needed to start servoing.
    pub n_persist: u32,
    /// Seconds without a detection before giving up on a target.
    pub lost_timeout: f64,
    /// Seconds a charge lasts at most.
    pub charge_timeout: f64,
    /// Random-walk leg duration range, s.
    pub walk_duration: [f64; 2],
    pub walk_forward: f64,
    /// Forward feedforward while servoing toward a target.
    pub approach_forward: f64,
    /// Forward feedforward of the charge.
    pub charge: f64,
    /// Cluster size (cells) that triggers a charge at a balloon.
    pub charge_cells: f64,
    /// Bounding-box area (px) that triggers a charge through a goal.
    pub charge_goal_px: f64,
    /// Cruise height while searching for balloons.
    pub balloon_height: f64,
    /// Cruise height while searching for goals.
    pub goal_height: f64,
}

impl Default for AutonomyParams {
    fn default() -> Self {
        Self {
            n_persist: 3,
            lost_timeout: 2.0,
            charge_timeout: 5.0,
            walk_duration: [4.0, 8.0],
            walk_forward: 0.06,
            approach_forward: 0.05,
            charge: 0.12,
            charge_cells: 5.0,
            charge_goal_px: 2500.0,
            balloon_height: 2.2,
            goal_height: 4.7,
        }
    }
}

impl AutonomyParams {
    pub fn validate(&self) -> Result<(), String> {
        let finite = [
            self.lost_timeout,
            self.charge_timeout,
            self.walk_duration[0],
            self.walk_duration[1],
            self.walk_forward,
            self.approach_forward,
            self.charge,
            self.charge_cells,
            self.charge_goal_px,
            self.balloon_height,
            self.goal_height,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err("autonomy parameters must be finite".into());
        }
        if self.n_persist == 0 || self.lost_timeout <= 0.0 || self.charge_timeout <= 0.0 {
            return Err("persistence and timeouts must be positive".into());
        }
        if !(self.walk_duration[0] > 0.0 && self.walk_duration[0] <= self.walk_duration[1]) {
            return Err("walk duration range must be positive and ordered".into());
        }
        if self.charge_cells <= 0.0 || self.charge_goal_px <= 0.0 {
            return Err("charge thresholds must be positive".into());
        }
        Ok(())
    }
}

/// Things the world tells a blimp about itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorldEvent {
    Captured,
    Delivered,
}

/// What the controller should do until the next perception frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BehaviorCommand {
    /// Keep the current setpoints, no forward push.
    Hold,
    Walk { heading: f64, forward: f64, height: f64 },
    /// `target: None` keeps the setpoints latched from the last sighting.
    Servo { target: Option<ServoTarget>, forward: f64, charging: bool },
    Manual(ManualCommand),
}

impl BehaviorCommand {
    pub fn target(&self) -> Option<&ServoTarget> {
        match self {
            BehaviorCommand::Servo { target, .. } => target.as_ref(),
            _ => None,
        }
    }

    pub fn is_charging(&self) -> bool {
        matches!(self, BehaviorCommand::Servo { charging: true, .. })
    }
}

/// The current objective seen through whichever detector applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sighting {
    pub valid: bool,
    pub center: [f64; 2],
    pub size: f64,
}

impl Sighting {
    pub const NONE: Sighting = Sighting { valid: false, center: [0.0, 0.0], size: 0.0 };
}

impl From<&Detection> for Sighting {
    fn from(d: &Detection) -> Self {
        Sighting { valid: d.valid, center: d.center, size: d.size as f64 }
    }
}

impl From<&GoalDetection> for Sighting {
    fn from(d: &GoalDetection) -> Self {
        Sighting { valid: d.valid, center: d.center, size: d.size }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutonomyState {
    pub mode: Mode,
    pub carrying: bool,
    pub rw_heading: f64,
    pub rw_deadline: f64,
    pub persist_frames: u32,
    /// Time of the last valid sighting of the objective.
    pub last_seen: f64,
    pub charge_started: f64,
    pub manual: Option<ManualCommand>,
}

impl Default for AutonomyState {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl AutonomyState {
    /// Starts in RandomWalk with a leg due immediately.
    pub fn new(now: f64) -> Self {
        Self {
            mode: Mode::RandomWalk,
            carrying: false,
            rw_heading: 0.0,
            rw_deadline: now,
            persist_frames: 0,
            last_seen: now,
            charge_started: now,
            manual: None,
        }
    }

    pub fn objective(&self) -> TargetKind {
        if self.carrying {
            TargetKind::Goal
        } else {
            TargetKind::Balloon
        }
    }

    /// Picks the detection matching the current objective.
    pub fn sighting(&self, balloon: &Detection, goal: &GoalDetection) -> Sighting {
        match self.objective() {
            TargetKind::Balloon => balloon.into(),
            TargetKind::Goal => goal.into(),
        }
    }

    fn charge_threshold(&self, p: &AutonomyParams) -> f64 {
        match self.objective() {
            TargetKind::Balloon => p.charge_cells,
            TargetKind::Goal => p.charge_goal_px,
        }
    }

    fn enter(&mut self, mode: Mode, now: f64) {
        self.mode = mode;
        self.persist_frames = 0;
        self.last_seen = now;
        self.charge_started = now;
        if mode == Mode::RandomWalk {
            self.rw_deadline = now;
        }
    }

    /// Applies a central mode command. Always wins.
    pub fn command(&mut self, mode: Mode, now: f64) {
        self.enter(mode, now);
        if mode == Mode::Manual {
            self.manual = None;
        }
    }

    /// Capture and delivery flip the objective and end any pursuit.
    pub fn event(&mut self, event: WorldEvent, now: f64) {
        self.carrying = matches!(event, WorldEvent::Captured);
        if matches!(self.mode, Mode::MoveToGoal | Mode::PassThroughGoal) {
            self.enter(Mode::RandomWalk, now);
        } else {
            self.persist_frames = 0;
        }
    }

    /// One perception-rate update of the mode.
    pub fn transition(
        &mut self,
        balloon: &Detection,
        goal: &GoalDetection,
        now: f64,
        central: Option<Mode>,
        params: &AutonomyParams,
    ) {
        if let Some(mode) = central {
            self.command(mode, now);
            return;
        }
        let seen = self.sighting(balloon, goal);
        match self.mode {
            Mode::Manual => {}
            Mode::RandomWalk => {
                self.persist_frames = if seen.valid { self.persist_frames + 1 } else { 0 };
                if self.persist_frames >= params.n_persist {
                    self.enter(Mode::MoveToGoal, now);
                }
            }
            Mode::MoveToGoal => {
                if seen.valid {
                    self.last_seen = now;
                    if seen.size >= self.charge_threshold(params) {
                        self.enter(Mode::PassThroughGoal, now);
                    }
                } else if now - self.last_seen >= params.lost_timeout {
                    self.enter(Mode::RandomWalk, now);
                }
            }
            Mode::PassThroughGoal => {
                if now - self.charge_started >= params.charge_timeout {
                    self.enter(Mode::RandomWalk, now);
                }
            }
        }
    }

    /// The command for the current mode. Draws a new random-walk leg when the
    /// previous one has run out.
    pub fn behavior<R: Rng>(&mut self, seen: &Sighting, now: f64, params: &AutonomyParams, rng: &mut R) -> BehaviorCommand {
        let kind = self.objective();
        let target = seen.valid.then_some(ServoTarget { center: seen.center, kind, size: seen.size });
        match self.mode {
            Mode::Manual => self.manual.map_or(BehaviorCommand::Hold, BehaviorCommand::Manual),
            Mode::RandomWalk => {
                if now >= self.rw_deadline {
                    self.rw_heading = PI - 2.0 * PI * rng.gen::<f64>();
                    let [lo, hi] = params.walk_duration;
                    self.rw_deadline = now + lo + (hi - lo) * rng.gen::<f64>();
                }
                let height = match kind {
                    TargetKind::Balloon => params.balloon_height,
                    TargetKind::Goal => params.goal_height,
                };
                BehaviorCommand::Walk { heading: self.rw_heading, forward: params.walk_forward, height }
            }
            Mode::MoveToGoal => BehaviorCommand::Servo { target, forward: params.approach_forward, charging: false },
            Mode::PassThroughGoal => BehaviorCommand::Servo { target, forward: params.charge, charging: true },
        }
    }
}
