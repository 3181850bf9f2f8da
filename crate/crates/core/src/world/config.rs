use crate::perception::Shape;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle on the floor, `[x, y]` center and `[w, h]` size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub center: [f64; 2],
    pub size: [f64; 2],
}

impl Region {
    pub fn min(&self) -> [f64; 2] {
        [self.center[0] - 0.5 * self.size[0], self.center[1] - 0.5 * self.size[1]]
    }

    pub fn max(&self) -> [f64; 2] {
        [self.center[0] + 0.5 * self.size[0], self.center[1] + 0.5 * self.size[1]]
    }
}

/// An air-conditioning outlet blowing along `direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AcUnit {
    pub position: [f64; 3],
    pub direction: [f64; 3],
    /// Long-run mean jet speed at the outlet, m/s.
    pub mean_speed: f64,
    /// Gust fluctuation scale, m/s.
    pub gust: f64,
    /// Gust correlation time, s.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct HoopConfig {
    pub shape: Shape,
    pub center: [f64; 3],
    /// Heading of the hoop's normal, rad.
    pub facing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct BalloonConfig {
    pub radius: f64,
    pub float_height: f64,
    pub color: [u8; 3],
    /// Horizontal sway per unit wind speed, m per m/s.
    pub sway: f64,
}

impl Default for BalloonConfig {
    fn default() -> Self {
        Self { radius: 0.15, float_height: 1.5, color: [200, 30, 35], sway: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureConfig {
    /// Net cylinder radius, m.
    pub radius: f64,
    /// Net cylinder height, m.
    pub height: f64,
    /// Depth of the cylinder center below the COM, m.
    pub drop: f64,
    /// Minimum forward speed to scoop a balloon, m/s.
    pub min_speed: f64,
    /// Extra reach around a hoop aperture that still counts as contact, m.
    pub delivery_margin: f64,
    /// Time a blimp is out of play after a capture or delivery, s.
    pub handling_delay: f64,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self { radius: 0.3, height: 0.5, drop: 0.7, min_speed: 0.1, delivery_margin: 0.3, handling_delay: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    /// Horizontal field of view, degrees.
    pub fov_deg: f64,
    /// Camera position in the body frame, m.
    pub mount: [f64; 3],
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { fov_deg: 80.0, mount: [0.3, 0.0, -0.7] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Per-channel Gaussian noise, 8-bit levels.
    pub noise_sigma: f64,
    /// Per-object brightness jitter, fraction.
    pub brightness_jitter: f64,
    /// Gain reduction of IR captures, fraction.
    pub ir_dim: f64,
    pub floor: [u8; 3],
    pub wall: [u8; 3],
    pub blimp_color: [u8; 3],
    pub hoop_color: [u8; 3],
    /// Hoop tape width, m.
    pub tape_width: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 6.0,
            brightness_jitter: 0.2,
            ir_dim: 0.4,
            floor: [112, 112, 108],
            wall: [150, 150, 152],
            blimp_color: [40, 70, 190],
            hoop_color: [230, 200, 20],
            tape_width: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Arena size `[x, y, z]`, m.
    pub arena: [f64; 3],
    pub ac_units: Vec<AcUnit>,
    /// Global wind speed cap, m/s.
    pub wind_cap: f64,
    pub balloon_spawn: Region,
    pub blimp_spawn: Region,
    pub hoops: Vec<HoopConfig>,
    /// Aperture circumradius of every hoop, m.
    pub hoop_radius: f64,
    pub balloon: BalloonConfig,
    pub capture: CaptureConfig,
    pub camera: CameraConfig,
    pub render: RenderConfig,
    /// Radius of the blimp envelope, m.
    pub blimp_radius: f64,
    /// Height at which redeployed blimps start, m.
    pub launch_height: f64,
    /// Wall spring stiffness, N/m.
    pub wall_stiffness: f64,
    /// Distance from the walls at which the spring engages, m.
    pub wall_margin: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let x = |p: [f64; 3]| p;
        Self {
            arena: [20.0, 15.0, 8.0],
            ac_units: vec![
                AcUnit { position: x([0.5, 3.0, 6.0]), direction: [1.0, 0.3, -0.4], mean_speed: 0.5, gust: 0.3, tau: 4.0 },
                AcUnit { position: x([19.5, 12.0, 6.0]), direction: [-1.0, -0.2, -0.4], mean_speed: 0.5, gust: 0.3, tau: 4.0 },
                AcUnit { position: x([10.0, 0.5, 7.0]), direction: [0.0, 1.0, -0.3], mean_speed: 0.4, gust: 0.3, tau: 6.0 },
            ],
            wind_cap: 1.0,
            balloon_spawn: Region { center: [10.0, 7.5], size: [5.0, 5.0] },
            blimp_spawn: Region { center: [10.0, 7.5], size: [10.0, 10.0] },
            hoops: vec![
                HoopConfig { shape: Shape::Circle, center: [2.0, 7.5, 4.0], facing: 0.0 },
                HoopConfig { shape: Shape::Rectangle, center: [18.0, 7.5, 4.0], facing: std::f64::consts::PI },
                HoopConfig { shape: Shape::Triangle, center: [10.0, 13.0, 4.0], facing: -std::f64::consts::FRAC_PI_2 },
            ],
            hoop_radius: 0.75,
            balloon: BalloonConfig::default(),
            capture: CaptureConfig::default(),
            camera: CameraConfig::default(),
            render: RenderConfig::default(),
            blimp_radius: 0.635,
            launch_height: 1.2,
            wall_stiffness: 0.4,
            wall_margin: 0.6,
        }
    }
}

impl WorldConfig {
    /// Reachable box for a blimp center: the arena shrunk by the envelope,
    /// with room under the gondola.
    pub fn blimp_bounds(&self) -> ([f64; 3], [f64; 3]) {
        let r = self.blimp_radius;
        let floor = self.capture.drop + 0.1;
        ([r, r, floor], [self.arena[0] - r, self.arena[1] - r, self.arena[2] - r])
    }

    pub fn validate(&self) -> Result<(), String> {
        let inside = |reg: &Region, what: &str| {
            let (lo, hi) = (reg.min(), reg.max());
            if reg.size.iter().any(|&s| !(s > 0.0)) || lo[0] < 0.0 || lo[1] < 0.0 || hi[0] > self.arena[0] || hi[1] > self.arena[1] {
                Err(format!("{what} spawn region must lie inside the arena"))
            } else {
                Ok(())
            }
        };
        if self.arena.iter().any(|&a| !(a.is_finite() && a > 2.0)) {
            return Err("arena sides must exceed 2 m".into());
        }
        inside(&self.balloon_spawn, "balloon")?;
        inside(&self.blimp_spawn, "blimp")?;
        let (lo, hi) = self.blimp_bounds();
        if (0..3).any(|i| lo[i] >= hi[i]) {
            return Err("arena too small for a blimp".into());
        }
        if !(self.wind_cap >= 0.0) {
            return Err("wind cap must be non-negative".into());
        }
        for ac in &self.ac_units {
            let d = ac.direction;
            if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() < 1e-9 || !(ac.tau > 0.0) || ac.gust < 0.0 || ac.mean_speed < 0.0 {
                return Err("AC units need a direction, positive tau and non-negative speeds".into());
            }
        }
        for h in &self.hoops {
            if (0..3).any(|i| h.center[i] < 0.0 || h.center[i] > self.arena[i]) {
                return Err("hoops must hang inside the arena".into());
            }
            if h.shape == Shape::Unknown {
                return Err("hoop shape must be triangle, rectangle or circle".into());
            }
        }
        let b = &self.balloon;
        if !(b.radius > 0.0 && b.float_height > b.radius && b.float_height < self.arena[2]) {
            return Err("balloon must float inside the arena".into());
        }
        let c = &self.capture;
        if [c.radius, c.height, c.drop, c.delivery_margin, c.handling_delay].iter().any(|&v| !(v >= 0.0)) {
            return Err("capture geometry must be non-negative".into());
        }
        if !(self.camera.fov_deg > 1.0 && self.camera.fov_deg < 170.0) {
            return Err("camera field of view must be within (1, 170) degrees".into());
        }
        if !(self.hoop_radius > 0.0 && self.blimp_radius > 0.0 && self.wall_stiffness >= 0.0 && self.wall_margin >= 0.0) {
            return Err("radii must be positive".into());
        }
        if !(self.launch_height >= lo[2] && self.launch_height <= hi[2]) {
            return Err("launch height outside the reachable box".into());
        }
        Ok(())
    }
}
