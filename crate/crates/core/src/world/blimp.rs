use crate::autonomy::{AutonomyParams, AutonomyState, BehaviorCommand, Mode, WorldEvent};
use crate::comms::{AckStatus, CommsError, Message, ParamReading, ParamStore, Payload, Telemetry};
use crate::control::{Controller, Gains, ManualCommand, ManualLimits, SensorFeedback, TargetKind};
use crate::dynamics::{Allocation, BlimpParams, RigidState};
use crate::perception::color::Precision;
use crate::perception::goal::{color_mask, ir_mask, MaskSource};
use crate::perception::grid::{activate_means, cell_means};
use crate::perception::{detect_goal, ColorFamily, Detection, FilterParams, Frame, GoalDetection, GoalParams, LogOddsGrid};
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

/// Everything that configures one blimp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub params: BlimpParams,
    pub gains: Gains,
    pub limits: ManualLimits,
    pub autonomy: AutonomyParams,
    pub filter: FilterParams,
    /// Mahalanobis acceptance radius for balloon cells.
    pub balloon_d: f64,
    pub goal: GoalParams,
    /// Defaults to the built-in calibrated family when absent.
    pub balloon_family: Option<ColorFamily>,
    pub goal_family: Option<ColorFamily>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            params: BlimpParams::default(),
            gains: Gains::default(),
            limits: ManualLimits::default(),
            autonomy: AutonomyParams::default(),
            filter: FilterParams::default(),
            balloon_d: 3.0,
            goal: GoalParams::default(),
            balloon_family: None,
            goal_family: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.params.validate().map_err(|e| e.to_string())?;
        self.gains.validate()?;
        self.autonomy.validate()?;
        self.filter.validate()?;
        let l = &self.limits;
        if ![l.forward, l.yaw, l.climb].iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err("manual limits must be finite and non-negative".into());
        }
        let g = &self.goal;
        if !(self.balloon_d > 0.0 && self.balloon_d.is_finite() && g.d_thresh > 0.0 && g.d_thresh.is_finite()) {
            return Err("Mahalanobis thresholds must be positive".into());
        }
        if !(g.epsilon > 0.0 && g.epsilon < 0.5) {
            return Err("goal polygon tolerance must be in (0, 0.5)".into());
        }
        for f in self.balloon_family.iter().chain(&self.goal_family) {
            f.precision().map_err(|e| format!("color family {:?}: {e}", f.name))?;
        }
        Ok(())
    }

    pub fn balloon_family(&self) -> ColorFamily {
        self.balloon_family.clone().unwrap_or_else(|| crate::training::default_balloon_family().clone())
    }

    pub fn goal_family(&self) -> ColorFamily {
        self.goal_family.clone().unwrap_or_else(|| crate::training::default_goal_family().clone())
    }
}

/// Names of the runtime-tunable parameters.
pub const PARAM_KEYS: [&str; 25] = [
    "ctl.k",
    "ctl.k_d",
    "ctl.k_r",
    "ctl.k_rd",
    "ctl.k_px_yaw",
    "ctl.k_px_h",
    "ctl.man_fwd",
    "ctl.man_yaw",
    "ctl.man_climb",
    "perc.d_thresh",
    "perc.p_act",
    "perc.goal_d",
    "perc.goal_src",
    "perc.ir_lum",
    "perc.min_blob",
    "auto.n_persist",
    "auto.lost_t",
    "auto.charge_t",
    "auto.walk_fwd",
    "auto.approach",
    "auto.charge",
    "auto.charge_n",
    "auto.charge_px",
    "auto.h_balloon",
    "auto.h_goal",
];

/// Why a blimp is out of play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bench {
    AfterCapture,
    AfterDelivery,
}

/// One simulated vehicle with its onboard software.
#[derive(Debug, Clone)]
pub struct Blimp {
    pub id: u16,
    pub config: AgentConfig,
    pub state: RigidState,
    pub prev_position: nalgebra::Vector3<f64>,
    pub controller: Controller,
    pub autonomy: AutonomyState,
    pub grid: LogOddsGrid,
    pub balloon_det: Detection,
    pub goal_det: GoalDetection,
    pub behavior: BehaviorCommand,
    pub allocation: Option<Allocation>,
    pub attempts: u64,
    pub benched: Option<(f64, Bench)>,
    pub store: ParamStore,
    balloon_precision: Precision,
    goal_precision: Precision,
    charging: bool,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) render_rng: Xoshiro256PlusPlus,
}

impl Blimp {
    pub fn new(
        id: u16,
        config: AgentConfig,
        state: RigidState,
        store: ParamStore,
        now: f64,
        rng: ChaCha8Rng,
        render_rng: Xoshiro256PlusPlus,
    ) -> Result<Self, String> {
        config.validate()?;
        let fb = SensorFeedback::from_state(&state);
        let balloon_precision = config.balloon_family().precision().map_err(|e| e.to_string())?;
        let goal_precision = config.goal_family().precision().map_err(|e| e.to_string())?;
        let mut b = Self {
            id,
            controller: Controller::new(config.gains.clone(), config.limits.clone(), &fb),
            grid: LogOddsGrid::new(config.filter.clone()),
            config,
            prev_position: state.position,
            state,
            autonomy: AutonomyState::new(now),
            balloon_det: Detection::NONE,
            goal_det: GoalDetection::NONE,
            behavior: BehaviorCommand::Hold,
            allocation: None,
            attempts: 0,
            benched: None,
            store,
            balloon_precision,
            goal_precision,
            charging: false,
            rng,
            render_rng,
        };
        let stored: Vec<(String, f32)> = b.store.entries().map(|(k, v)| (k.to_string(), v)).collect();
        for (k, v) in stored {
            if let Err(status) = b.apply_param(&k, v) {
                log::warn!("blimp {id}: ignoring stored {k}={v} ({status:?})");
            }
        }
        Ok(b)
    }

    pub fn in_play(&self) -> bool {
        self.benched.is_none()
    }

    pub fn feedback(&self) -> SensorFeedback {
        SensorFeedback::from_state(&self.state)
    }

    /// The detection for the current objective, as reported over telemetry.
    pub fn last_detection(&self) -> ([f64; 2], f64, bool) {
        match self.autonomy.objective() {
            TargetKind::Balloon => (self.balloon_det.center, self.balloon_det.size as f64, self.balloon_det.valid),
            TargetKind::Goal => (self.goal_det.center, self.goal_det.size, self.goal_det.valid),
        }
    }

    /// Runs the balloon detector on a visible-light frame.
    pub fn perceive_balloon(&mut self, frame: &Frame) {
        let means = cell_means(frame).expect("camera-sized frame");
        let act = activate_means(&means, &self.balloon_precision, self.config.balloon_d);
        self.grid.update(&act).expect("grid-sized activations");
        self.balloon_det = self.grid.detect();
    }

    pub fn perceive_goal_color(&mut self, frame: &Frame) {
        let mask = color_mask(frame, &self.goal_precision, self.config.goal.d_thresh);
        self.goal_det = detect_goal(&mask, &self.config.goal);
    }

    pub fn perceive_goal_ir(&mut self, on: &Frame, off: &Frame) {
        let mask = ir_mask(on, off, self.config.goal.luminance).expect("matching frames");
        self.goal_det = detect_goal(&mask, &self.config.goal);
    }

    pub fn goal_source(&self) -> MaskSource {
        self.config.goal.source
    }

    /// Mode update and behavior selection after a perception pass. Returns
    /// true on the onset of a balloon charge.
    pub fn decide(&mut self, now: f64) -> bool {
        let p = self.config.autonomy.clone();
        self.autonomy.transition(&self.balloon_det, &self.goal_det, now, None, &p);
        let seen = self.autonomy.sighting(&self.balloon_det, &self.goal_det);
        self.behavior = self.autonomy.behavior(&seen, now, &p, &mut self.rng);
        self.apply_behavior();
        let charging = self.behavior.is_charging();
        let onset = charging && !self.charging && self.autonomy.objective() == TargetKind::Balloon;
        self.charging = charging;
        if onset {
            self.attempts += 1;
        }
        onset
    }

    fn apply_behavior(&mut self) {
        let fb = self.feedback();
        match self.behavior {
            BehaviorCommand::Hold => self.controller.hold(),
            BehaviorCommand::Walk { heading, forward, height } => self.controller.cruise(height, heading, forward),
            BehaviorCommand::Servo { target: Some(t), forward, .. } => self.controller.servo_to(&fb, &t, forward),
            BehaviorCommand::Servo { target: None, forward, .. } => {
                let (h, psi) = self.controller.setpoints();
                self.controller.cruise(h, psi, forward);
            }
            BehaviorCommand::Manual(cmd) => self.controller.set_manual(cmd),
        }
    }

    pub fn event(&mut self, ev: WorldEvent, now: f64) {
        self.autonomy.event(ev, now);
        self.grid.reset();
        self.balloon_det = Detection::NONE;
        self.goal_det = GoalDetection::NONE;
        self.charging = false;
        // the chased objective is gone; hold until the next frame picks a new one
        if matches!(self.behavior, BehaviorCommand::Servo { .. }) {
            self.behavior = BehaviorCommand::Hold;
            self.controller.hold();
        }
    }

    /// Puts the blimp back on the field at `state`, searching for balloons.
    pub fn redeploy(&mut self, state: RigidState, now: f64) {
        self.state = state;
        self.prev_position = state.position;
        let mode = self.autonomy.mode;
        self.autonomy = AutonomyState::new(now);
        if mode == Mode::Manual {
            self.autonomy.command(Mode::Manual, now);
        }
        self.controller = Controller::new(self.config.gains.clone(), self.config.limits.clone(), &self.feedback());
        self.grid.reset();
        self.balloon_det = Detection::NONE;
        self.goal_det = GoalDetection::NONE;
        self.behavior = BehaviorCommand::Hold;
        self.charging = false;
        self.benched = None;
    }

    pub fn set_mode(&mut self, mode: Mode, now: f64) {
        self.autonomy.command(mode, now);
        self.charging = false;
        if mode == Mode::Manual {
            self.behavior = BehaviorCommand::Hold;
            self.controller.hold();
        }
    }

    pub fn set_manual(&mut self, cmd: ManualCommand) {
        let cmd = cmd.clamped();
        self.autonomy.manual = Some(cmd);
        if self.autonomy.mode == Mode::Manual {
            self.behavior = BehaviorCommand::Manual(cmd);
            self.controller.set_manual(cmd);
        }
    }

    pub fn telemetry(&self, param: Option<&str>) -> Telemetry {
        let (c, n, valid) = self.last_detection();
        Telemetry {
            h: self.state.position.z as f32,
            psi: self.state.yaw() as f32,
            phi: self.state.roll() as f32,
            theta: self.state.pitch() as f32,
            battery: 1.0,
            mode: self.autonomy.mode,
            det_center: [c[0] as f32, c[1] as f32],
            det_size: n.round().clamp(0.0, u16::MAX as f64) as u16,
            det_valid: valid,
            param: param.map(|k| match self.param(k) {
                Some(value) => ParamReading { key: k.to_string(), value, found: true },
                None => ParamReading { key: k.to_string(), value: 0.0, found: false },
            }),
        }
    }

    /// Handles one request from the ground station; returns the reply, if any.
    pub fn handle(&mut self, msg: &Message, now: f64) -> Option<Message> {
        let (id, seq) = (self.id, msg.seq);
        let reply = |payload| Some(Message { robot_id: id, seq, payload });
        match &msg.payload {
            Payload::ParamSet { key, value } => {
                let status = self.set_param(key, *value);
                reply(Payload::ParamAck { key: key.clone(), value: *value, status })
            }
            Payload::TelemetryReq { param } => reply(Payload::TelemetryResp(self.telemetry(param.as_deref()))),
            Payload::ModeCmd(mode) => {
                self.set_mode(*mode, now);
                None
            }
            Payload::ManualCmd { forward, yaw_rate, climb } => {
                self.set_manual(ManualCommand { forward: *forward as f64, yaw_rate: *yaw_rate as f64, climb: *climb as f64 });
                None
            }
            Payload::ParamAck { .. } | Payload::TelemetryResp(_) => None,
        }
    }

    /// Validates, applies and persists. Nothing changes unless the write lands.
    pub fn set_param(&mut self, key: &str, value: f32) -> AckStatus {
        let before = (self.config.clone(), self.controller.clone(), self.grid.clone());
        if let Err(status) = self.apply_param(key, value) {
            return status;
        }
        match self.store.set(key, value) {
            Ok(()) => AckStatus::Stored,
            Err(CommsError::InvalidKey(_)) => {
                (self.config, self.controller, self.grid) = before;
                AckStatus::InvalidKey
            }
            Err(_) => {
                (self.config, self.controller, self.grid) = before;
                AckStatus::StorageFailure
            }
        }
    }

    pub fn param(&self, key: &str) -> Option<f32> {
        let c = &self.config;
        let v = match key {
            "ctl.k" => c.gains.k,
            "ctl.k_d" => c.gains.k_d,
            "ctl.k_r" => c.gains.k_r,
            "ctl.k_rd" => c.gains.k_rd,
            "ctl.k_px_yaw" => c.gains.k_px[0],
            "ctl.k_px_h" => c.gains.k_px[1],
            "ctl.man_fwd" => c.limits.forward,
            "ctl.man_yaw" => c.limits.yaw,
            "ctl.man_climb" => c.limits.climb,
            "perc.d_thresh" => c.balloon_d,
            "perc.p_act" => c.filter.p_act,
            "perc.goal_d" => c.goal.d_thresh,
            "perc.goal_src" => match c.goal.source {
                MaskSource::Color => 0.0,
                MaskSource::Ir => 1.0,
            },
            "perc.ir_lum" => c.goal.luminance as f64,
            "perc.min_blob" => c.goal.min_blob as f64,
            "auto.n_persist" => c.autonomy.n_persist as f64,
            "auto.lost_t" => c.autonomy.lost_timeout,
            "auto.charge_t" => c.autonomy.charge_timeout,
            "auto.walk_fwd" => c.autonomy.walk_forward,
            "auto.approach" => c.autonomy.approach_forward,
            "auto.charge" => c.autonomy.charge,
            "auto.charge_n" => c.autonomy.charge_cells,
            "auto.charge_px" => c.autonomy.charge_goal_px,
            "auto.h_balloon" => c.autonomy.balloon_height,
            "auto.h_goal" => c.autonomy.goal_height,
            _ => return None,
        };
        Some(v as f32)
    }

    fn apply_param(&mut self, key: &str, value: f32) -> Result<(), AckStatus> {
        if !PARAM_KEYS.contains(&key) {
            return Err(AckStatus::InvalidKey);
        }
        let v = value as f64;
        if !v.is_finite() {
            return Err(AckStatus::InvalidValue);
        }
        let whole = |v: f64, lo: f64, hi: f64| {
            if v.fract() == 0.0 && v >= lo && v <= hi {
                Ok(v)
            } else {
                Err(AckStatus::InvalidValue)
            }
        };
        let mut c = self.config.clone();
        match key {
            "ctl.k" => c.gains.k = v,
            "ctl.k_d" => c.gains.k_d = v,
            "ctl.k_r" => c.gains.k_r = v,
            "ctl.k_rd" => c.gains.k_rd = v,
            "ctl.k_px_yaw" => c.gains.k_px[0] = v,
            "ctl.k_px_h" => c.gains.k_px[1] = v,
            "ctl.man_fwd" => c.limits.forward = v,
            "ctl.man_yaw" => c.limits.yaw = v,
            "ctl.man_climb" => c.limits.climb = v,
            "perc.d_thresh" => c.balloon_d = v,
            "perc.p_act" => c.filter.p_act = v,
            "perc.goal_d" => c.goal.d_thresh = v,
            "perc.goal_src" => {
                c.goal.source = if whole(v, 0.0, 1.0)? == 0.0 { MaskSource::Color } else { MaskSource::Ir };
            }
            "perc.ir_lum" => c.goal.luminance = whole(v, 0.0, 255.0)? as u8,
            "perc.min_blob" => c.goal.min_blob = whole(v, 1.0, 76_800.0)? as usize,
            "auto.n_persist" => c.autonomy.n_persist = whole(v, 1.0, 1000.0)? as u32,
            "auto.lost_t" => c.autonomy.lost_timeout = v,
            "auto.charge_t" => c.autonomy.charge_timeout = v,
            "auto.walk_fwd" => c.autonomy.walk_forward = v,
            "auto.approach" => c.autonomy.approach_forward = v,
            "auto.charge" => c.autonomy.charge = v,
            "auto.charge_n" => c.autonomy.charge_cells = v,
            "auto.charge_px" => c.autonomy.charge_goal_px = v,
            "auto.h_balloon" => c.autonomy.balloon_height = v,
            "auto.h_goal" => c.autonomy.goal_height = v,
            _ => unreachable!("listed in PARAM_KEYS"),
        }
        c.validate().map_err(|_| AckStatus::InvalidValue)?;
        self.controller.gains = c.gains.clone();
        self.controller.limits = c.limits.clone();
        self.grid.params = c.filter.clone();
        self.config = c;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::codec::valid_key;
    use rand::SeedableRng;

    fn blimp(store: ParamStore) -> Blimp {
        Blimp::new(
            1,
            AgentConfig::default(),
            RigidState::at_rest(nalgebra::Vector3::new(5.0, 5.0, 2.2), 0.0),
            store,
            0.0,
            ChaCha8Rng::seed_from_u64(0),
            Xoshiro256PlusPlus::seed_from_u64(0),
        )
        .unwrap()
    }

    #[test]
    fn every_key_is_well_formed_and_readable() {
        let b = blimp(ParamStore::in_memory(1));
        for k in PARAM_KEYS {
            assert!(valid_key(k), "{k}");
            assert!(b.param(k).is_some(), "{k}");
        }
    }

    #[test]
    fn set_applies_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = blimp(ParamStore::open(dir.path(), 1).unwrap());
        assert_eq!(b.set_param("ctl.k", 1.0), AckStatus::Stored);
        assert_eq!(b.controller.gains.k, 1.0);
        assert_eq!(b.param("ctl.k"), Some(1.0));
        // a fresh runtime picks the stored value up
        let b2 = blimp(ParamStore::open(dir.path(), 1).unwrap());
        assert_eq!(b2.controller.gains.k, 1.0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut b = blimp(ParamStore::in_memory(1));
        assert_eq!(b.set_param("ctl.zzz", 1.0), AckStatus::InvalidKey);
        assert_eq!(b.set_param("perc.p_act", 1.5), AckStatus::InvalidValue);
        assert_eq!(b.set_param("auto.n_persist", 2.5), AckStatus::InvalidValue);
        assert_eq!(b.set_param("ctl.k", f32::NAN), AckStatus::InvalidValue);
        assert_eq!(b.param("perc.p_act"), Some(0.7));
        assert!(b.store.get("perc.p_act").is_err());
    }

    #[test]
    fn telemetry_echoes_seq_and_param() {
        let mut b = blimp(ParamStore::in_memory(1));
        let req = Message { robot_id: 1, seq: 77, payload: Payload::TelemetryReq { param: Some("ctl.k_r".into()) } };
        let resp = b.handle(&req, 0.0).unwrap();
        assert_eq!(resp.seq, 77);
        let Payload::TelemetryResp(t) = resp.payload else { panic!() };
        assert_eq!(t.param.unwrap().value, 2.0);
        assert!((t.h - 2.2).abs() < 1e-6);
        assert_eq!(t.mode, Mode::RandomWalk);
    }

    #[test]
    fn commands_do_not_reply() {
        let mut b = blimp(ParamStore::in_memory(1));
        assert!(b.handle(&Message { robot_id: 1, seq: 1, payload: Payload::ModeCmd(Mode::Manual) }, 0.0).is_none());
        assert_eq!(b.autonomy.mode, Mode::Manual);
        let m = Payload::ManualCmd { forward: 1.0, yaw_rate: 0.0, climb: 0.0 };
        assert!(b.handle(&Message { robot_id: 1, seq: 2, payload: m }, 0.0).is_none());
        assert!(matches!(b.behavior, BehaviorCommand::Manual(c) if c.forward == 1.0));
    }
}
