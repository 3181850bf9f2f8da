//! The arena and its fixed-step scheduler.
//!
//! Every tick is 5 ms: radio traffic is delivered, every 20th tick each blimp
//! renders its camera view and updates perception and autonomy, the wind
//! advances, controllers and rigid bodies step, and capture and delivery
//! events are checked. Everything random is drawn from streams derived from
//! the world seed, so a `(config, seed)` pair always replays identically.

pub mod blimp;
pub mod config;
pub mod objects;
pub mod render;
pub mod wind;

pub use blimp::{AgentConfig, Bench, Blimp, PARAM_KEYS};
pub use config::WorldConfig;
pub use objects::{check_capture, check_delivery, BalloonState, Hoop, TargetBalloon};
pub use render::{CameraModel, Drawable, Renderer};
pub use wind::WindField;

use crate::autonomy::{Mode, WorldEvent};
use crate::comms::{decode, encode, Endpoint, GroundStation, ParamStore, Radio, RadioModel, TrafficMonitor, BROADCAST};
use crate::dynamics::{step_with_disturbance, DynamicsError, RigidState};
use crate::perception::goal::MaskSource;
use crate::perception::Shape;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

pub const DT: f64 = 0.005;
pub const PERCEPTION_EVERY: u64 = 20;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("blimp {robot}: {source}")]
    Dynamics { robot: u16, source: DynamicsError },
    #[error("blimp {robot} left the arena")]
    Escaped { robot: u16 },
}

/// What happens after captures and deliveries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Captures bench the blimp; blimp and balloon are redeployed.
    Pickup,
    /// Captured balloons are carried to a hoop; delivery benches the blimp.
    Delivery,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Happening {
    Attempt { robot: u16 },
    Capture { robot: u16, balloon: usize },
    Delivery { robot: u16, balloon: usize, hoop: usize },
    Redeploy { robot: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub attempts: u64,
    pub successes: u64,
    pub deliveries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSnapshot {
    pub center: [f64; 2],
    pub size: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlimpSnapshot {
    pub id: u16,
    pub r: [f64; 3],
    pub euler: [f64; 3],
    pub mode: Mode,
    pub carrying: bool,
    pub last_detection: DetectionSnapshot,
    pub benched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalloonSnapshot {
    pub id: usize,
    pub r: [f64; 3],
    #[serde(flatten)]
    pub state: BalloonState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoopSnapshot {
    pub id: usize,
    pub shape: Shape,
    pub center: [f64; 3],
    pub facing: f64,
    pub radius: f64,
}

/// The state streamed to operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub blimps: Vec<BlimpSnapshot>,
    pub balloons: Vec<BalloonSnapshot>,
    pub hoops: Vec<HoopSnapshot>,
}

/// Everything needed to build a world.
#[derive(Debug, Clone)]
pub struct WorldSetup {
    pub world: WorldConfig,
    /// One entry per blimp; ids are assigned 1, 2, ...
    pub agents: Vec<AgentConfig>,
    pub n_balloons: usize,
    pub radio: RadioModel,
    pub scenario: Scenario,
    pub seed: u64,
}

impl WorldSetup {
    pub fn new(n_blimps: usize, n_balloons: usize, scenario: Scenario, seed: u64) -> Self {
        Self {
            world: WorldConfig::default(),
            agents: vec![AgentConfig::default(); n_blimps],
            n_balloons,
            radio: RadioModel::default(),
            scenario,
            seed,
        }
    }
}

const WIND_STREAM: u64 = 1;
const SPAWN_STREAM: u64 = 2;
const RADIO_STREAM: u64 = 3;
const AGENT_STREAM: u64 = 1000;

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

pub struct World {
    pub config: WorldConfig,
    pub scenario: Scenario,
    pub seed: u64,
    tick: u64,
    pub blimps: Vec<Blimp>,
    pub balloons: Vec<TargetBalloon>,
    pub hoops: Vec<Hoop>,
    pub wind: WindField,
    pub radio: Radio,
    pub station: GroundStation,
    pub monitor: TrafficMonitor,
    pub counters: Counters,
    pub log: Vec<(f64, Happening)>,
    renderer: Renderer,
    wind_rng: ChaCha8Rng,
    spawn_rng: ChaCha8Rng,
    station_position: Vector3<f64>,
}

impl World {
    /// Builds a world. With `state_dir` each blimp keeps its parameters in
    /// `state_dir/robot_<id>.json`.
    pub fn new(setup: WorldSetup, state_dir: Option<&Path>) -> Result<Self, WorldError> {
        let cfg = setup.world;
        cfg.validate().map_err(WorldError::Config)?;
        setup.radio.validate().map_err(WorldError::Config)?;
        if setup.agents.len() >= BROADCAST as usize {
            return Err(WorldError::Config("too many blimps".into()));
        }
        let seed = setup.seed;
        let mut spawn_rng = stream(seed, SPAWN_STREAM);
        let hoops = cfg.hoops.iter().enumerate().map(|(i, h)| Hoop::new(i, h, cfg.hoop_radius)).collect();
        let balloons = (0..setup.n_balloons)
            .map(|i| {
                let anchor = spawn_point(&cfg.balloon_spawn, &mut spawn_rng);
                TargetBalloon::new(i, anchor, &cfg.balloon)
            })
            .collect();
        let mut blimps = Vec::with_capacity(setup.agents.len());
        for (k, agent) in setup.agents.into_iter().enumerate() {
            let id = k as u16 + 1;
            let pose = launch_pose(&cfg, &mut spawn_rng);
            let store = match state_dir {
                Some(dir) => ParamStore::open(dir, id).map_err(|e| WorldError::Config(e.to_string()))?,
                None => ParamStore::in_memory(id),
            };
            let render_rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(id as u64 + 1)));
            let b = Blimp::new(id, agent, pose, store, 0.0, stream(seed, AGENT_STREAM + id as u64), render_rng)
                .map_err(|e| WorldError::Config(format!("blimp {id}: {e}")))?;
            blimps.push(b);
        }
        let station_position = Vector3::new(0.5 * cfg.arena[0], 0.5 * cfg.arena[1], 0.0);
        Ok(Self {
            renderer: Renderer::new(&cfg.camera, &cfg.render),
            wind: WindField::new(&cfg.ac_units, cfg.wind_cap),
            radio: Radio::new(setup.radio, stream(seed, RADIO_STREAM).gen()),
            wind_rng: stream(seed, WIND_STREAM),
            spawn_rng,
            station: GroundStation::new(),
            monitor: TrafficMonitor::default(),
            counters: Counters::default(),
            log: Vec::new(),
            scenario: setup.scenario,
            seed,
            tick: 0,
            blimps,
            balloons,
            hoops,
            config: cfg,
            station_position,
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * DT
    }

    pub fn ticks(&self) -> u64 {
        self.tick
    }

    pub fn renderer(&self) -> &Renderer {
        &self.renderer
    }

    pub fn blimp(&self, id: u16) -> Option<&Blimp> {
        self.blimps.iter().find(|b| b.id == id)
    }

    pub fn blimp_mut(&mut self, id: u16) -> Option<&mut Blimp> {
        self.blimps.iter_mut().find(|b| b.id == id)
    }

    /// Advances one 5 ms step.
    pub fn tick(&mut self) -> Result<(), WorldError> {
        let now = self.time();
        self.radio_step(now);
        if self.tick.is_multiple_of(PERCEPTION_EVERY) {
            self.perception_step(now);
        }
        self.wind.advance(DT, &mut self.wind_rng);
        self.physics_step()?;
        self.tick += 1;
        let now = self.time();
        self.update_balloons();
        self.check_events(now);
        self.redeploy_due(now);
        Ok(())
    }

    pub fn run_for(&mut self, seconds: f64) -> Result<(), WorldError> {
        let n = (seconds / DT).round() as u64;
        for _ in 0..n {
            self.tick()?;
        }
        Ok(())
    }

    fn distance_to_station(&self, to: Endpoint) -> f64 {
        match to {
            Endpoint::Blimp(id) => self.blimp(id).map_or(0.0, |b| (b.state.position - self.station_position).norm()),
            Endpoint::Station => 0.0,
        }
    }

    fn radio_step(&mut self, now: f64) {
        for msg in self.station.poll(now) {
            let bytes = match encode(&msg) {
                Ok(b) => b,
                Err(e) => {
                    log::warn!("station message not encodable: {e}");
                    continue;
                }
            };
            let to = Endpoint::Blimp(msg.robot_id);
            let d = if msg.robot_id == BROADCAST {
                self.blimps.iter().map(|b| (b.state.position - self.station_position).norm()).fold(0.0, f64::max)
            } else {
                self.distance_to_station(to)
            };
            self.monitor.on_send(now, Endpoint::Station, to, &bytes);
            self.radio.send(now, Endpoint::Station, to, bytes, d);
        }
        for frame in self.radio.drain(now) {
            match frame.to {
                Endpoint::Station => {
                    if let Ok(m) = decode(&frame.bytes) {
                        self.station.receive(m);
                    }
                }
                Endpoint::Blimp(addr) => {
                    let targets: Vec<usize> =
                        (0..self.blimps.len()).filter(|&i| addr == BROADCAST || self.blimps[i].id == addr).collect();
                    for i in targets {
                        let id = self.blimps[i].id;
                        self.monitor.on_receive(id, &frame.bytes);
                        let Ok(msg) = decode(&frame.bytes) else {
                            continue;
                        };
                        let Some(reply) = self.blimps[i].handle(&msg, now) else {
                            continue;
                        };
                        let Ok(bytes) = encode(&reply) else {
                            continue;
                        };
                        let d = self.distance_to_station(Endpoint::Blimp(id));
                        self.monitor.on_send(now, Endpoint::Blimp(id), Endpoint::Station, &bytes);
                        self.radio.send(now, Endpoint::Blimp(id), Endpoint::Station, bytes, d);
                    }
                }
            }
        }
    }

    /// Objects a given blimp's camera can see, with per-frame brightness jitter.
    pub fn scene_for(&mut self, viewer: usize) -> Vec<Drawable> {
        let jitter = self.config.render.brightness_jitter;
        let mut scene = Vec::with_capacity(self.balloons.len() + self.blimps.len() + self.hoops.len());
        for b in &self.balloons {
            let visible = match b.state {
                BalloonState::Free => true,
                BalloonState::Captured(by) => self.blimp(by).is_some_and(|o| o.in_play()),
                BalloonState::Delivered => false,
            };
            if visible {
                let k = 1.0 + jitter * (2.0 * self.blimps[viewer].render_rng.gen::<f64>() - 1.0);
                scene.push(Drawable::Sphere { center: b.position, radius: b.radius, color: self.config.balloon.color, brightness: k });
            }
        }
        for (i, o) in self.blimps.iter().enumerate() {
            if i != viewer && o.in_play() {
                scene.push(Drawable::Sphere {
                    center: o.state.position,
                    radius: self.config.blimp_radius,
                    color: self.config.render.blimp_color,
                    brightness: 1.0,
                });
            }
        }
        for h in &self.hoops {
            scene.push(Drawable::Ring {
                points: h.outline(),
                width: self.config.render.tape_width,
                color: self.config.render.hoop_color,
                retro: true,
            });
        }
        scene
    }

    fn perception_step(&mut self, now: f64) {
        for i in 0..self.blimps.len() {
            if !self.blimps[i].in_play() {
                continue;
            }
            let scene = self.scene_for(i);
            let b = &mut self.blimps[i];
            if b.autonomy.carrying {
                match b.goal_source() {
                    MaskSource::Color => {
                        let f = self.renderer.render(&scene, &b.state, &mut b.render_rng);
                        b.perceive_goal_color(&f);
                    }
                    MaskSource::Ir => {
                        let (on, off) = self.renderer.render_ir_pair(&scene, &b.state, &mut b.render_rng);
                        b.perceive_goal_ir(&on, &off);
                    }
                }
            } else {
                let f = self.renderer.render(&scene, &b.state, &mut b.render_rng);
                b.perceive_balloon(&f);
            }
            if b.decide(now) {
                self.counters.attempts += 1;
                self.log.push((now, Happening::Attempt { robot: b.id }));
            }
        }
    }

    fn physics_step(&mut self) -> Result<(), WorldError> {
        let (lo, hi) = self.config.blimp_bounds();
        let (k, margin) = (self.config.wall_stiffness, self.config.wall_margin);
        for b in self.blimps.iter_mut().filter(|b| b.in_play()) {
            let fb = b.feedback();
            let alloc = b.controller.step(&fb, &b.config.params);
            let wind = self.wind.at(&b.state.position);
            let p = b.state.position;
            let mut wall = Vector3::zeros();
            for a in 0..3 {
                if p[a] < lo[a] + margin {
                    wall[a] += k * (lo[a] + margin - p[a]);
                }
                if p[a] > hi[a] - margin {
                    wall[a] -= k * (p[a] - (hi[a] - margin));
                }
            }
            let mut next = step_with_disturbance(&b.state, &alloc.command, &wind, &wall, &b.config.params, DT)
                .map_err(|source| WorldError::Dynamics { robot: b.id, source })?;
            for a in 0..3 {
                if next.position[a] < lo[a] {
                    next.position[a] = lo[a];
                    next.velocity[a] = next.velocity[a].max(0.0);
                } else if next.position[a] > hi[a] {
                    next.position[a] = hi[a];
                    next.velocity[a] = next.velocity[a].min(0.0);
                }
            }
            if (0..3).any(|a| !(next.position[a] >= lo[a] && next.position[a] <= hi[a])) {
                return Err(WorldError::Escaped { robot: b.id });
            }
            b.prev_position = b.state.position;
            b.state = next;
            b.allocation = Some(alloc);
        }
        Ok(())
    }

    fn update_balloons(&mut self) {
        let drop = self.config.capture.drop;
        let sway = self.config.balloon.sway;
        for i in 0..self.balloons.len() {
            match self.balloons[i].state {
                BalloonState::Free => {
                    let w = self.wind.at(&self.balloons[i].position);
                    self.balloons[i].sway(&w, sway);
                }
                BalloonState::Captured(by) => {
                    if let Some(b) = self.blimps.iter().find(|b| b.id == by && b.in_play()) {
                        self.balloons[i].position = b.state.position - Vector3::new(0.0, 0.0, drop);
                    }
                }
                BalloonState::Delivered => {}
            }
        }
    }

    fn check_events(&mut self, now: f64) {
        let cap = self.config.capture.clone();
        for i in 0..self.blimps.len() {
            if !self.blimps[i].in_play() {
                continue;
            }
            let id = self.blimps[i].id;
            if !self.blimps[i].autonomy.carrying {
                let hit = self.balloons.iter().position(|ball| check_capture(&self.blimps[i].state, ball, &cap));
                if let Some(k) = hit {
                    self.balloons[k].state = BalloonState::Captured(id);
                    self.balloons[k].position = self.blimps[i].state.position - Vector3::new(0.0, 0.0, cap.drop);
                    self.counters.successes += 1;
                    self.log.push((now, Happening::Capture { robot: id, balloon: k }));
                    let b = &mut self.blimps[i];
                    b.event(WorldEvent::Captured, now);
                    if self.scenario == Scenario::Pickup {
                        b.benched = Some((now + cap.handling_delay, Bench::AfterCapture));
                    }
                }
            } else {
                let (p0, p1) = (self.blimps[i].prev_position, self.blimps[i].state.position);
                let Some(h) = self.hoops.iter().position(|h| check_delivery(&p0, &p1, true, h, &cap)) else {
                    continue;
                };
                let carried = self.balloons.iter().position(|ball| ball.state == BalloonState::Captured(id));
                if let Some(k) = carried {
                    self.balloons[k].state = BalloonState::Delivered;
                    self.counters.deliveries += 1;
                    self.log.push((now, Happening::Delivery { robot: id, balloon: k, hoop: h }));
                }
                let b = &mut self.blimps[i];
                b.event(WorldEvent::Delivered, now);
                b.benched = Some((now + cap.handling_delay, Bench::AfterDelivery));
            }
        }
    }

    fn redeploy_due(&mut self, now: f64) {
        for i in 0..self.blimps.len() {
            let Some((until, why)) = self.blimps[i].benched else {
                continue;
            };
            if now + 1e-9 < until {
                continue;
            }
            let id = self.blimps[i].id;
            if why == Bench::AfterCapture {
                if let Some(ball) = self.balloons.iter_mut().find(|b| b.state == BalloonState::Captured(id)) {
                    let anchor = spawn_point(&self.config.balloon_spawn, &mut self.spawn_rng);
                    *ball = TargetBalloon::new(ball.id, anchor, &self.config.balloon);
                }
            }
            let pose = launch_pose(&self.config, &mut self.spawn_rng);
            self.blimps[i].redeploy(pose, now);
            self.log.push((now, Happening::Redeploy { robot: id }));
        }
    }

    pub fn balloon_census(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for b in &self.balloons {
            match b.state {
                BalloonState::Free => c.0 += 1,
                BalloonState::Captured(_) => c.1 += 1,
                BalloonState::Delivered => c.2 += 1,
            }
        }
        c
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            t: self.time(),
            blimps: self
                .blimps
                .iter()
                .map(|b| {
                    let (center, size, valid) = b.last_detection();
                    BlimpSnapshot {
                        id: b.id,
                        r: b.state.position.into(),
                        euler: b.state.euler.into(),
                        mode: b.autonomy.mode,
                        carrying: b.autonomy.carrying,
                        last_detection: DetectionSnapshot { center, size, valid },
                        benched: !b.in_play(),
                    }
                })
                .collect(),
            balloons: self.balloons.iter().map(|b| BalloonSnapshot { id: b.id, r: b.position.into(), state: b.state }).collect(),
            hoops: self
                .hoops
                .iter()
                .map(|h| HoopSnapshot { id: h.id, shape: h.shape, center: h.center.into(), facing: h.facing, radius: h.radius })
                .collect(),
        }
    }

    /// Hash of the full physical and logical state.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let mut f = |v: f64| h.update(v.to_bits().to_le_bytes());
        f(self.tick as f64);
        for b in &self.blimps {
            let s = &b.state;
            for v in s.position.iter().chain(s.euler.iter()).chain(s.velocity.iter()).chain(s.omega.iter()) {
                f(*v);
            }
            f(b.autonomy.mode.code() as f64);
            f(b.autonomy.carrying as u8 as f64);
            f(b.attempts as f64);
        }
        for b in &self.balloons {
            for v in b.position.iter() {
                f(*v);
            }
            f(match b.state {
                BalloonState::Free => -1.0,
                BalloonState::Captured(id) => id as f64,
                BalloonState::Delivered => -2.0,
            });
        }
        for s in self.wind.speeds() {
            f(*s);
        }
        f(self.counters.attempts as f64);
        f(self.counters.successes as f64);
        f(self.counters.deliveries as f64);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn spawn_point<R: Rng>(region: &config::Region, rng: &mut R) -> [f64; 2] {
    let (lo, hi) = (region.min(), region.max());
    [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1])]
}

fn launch_pose<R: Rng>(cfg: &WorldConfig, rng: &mut R) -> RigidState {
    let [x, y] = spawn_point(&cfg.blimp_spawn, rng);
    let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    RigidState::at_rest(Vector3::new(x, y, cfg.launch_height), yaw)
}
