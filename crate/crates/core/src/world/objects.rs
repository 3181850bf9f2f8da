use super::config::{BalloonConfig, CaptureConfig, HoopConfig};
use crate::dynamics::RigidState;
use crate::perception::Shape;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "by")]
pub enum BalloonState {
    Free,
    Captured(u16),
    Delivered,
}

/// A balloon tied to a weight on the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBalloon {
    pub id: usize,
    pub anchor: [f64; 2],
    pub tether: f64,
    pub radius: f64,
    pub position: Vector3<f64>,
    pub state: BalloonState,
}

impl TargetBalloon {
    pub fn new(id: usize, anchor: [f64; 2], cfg: &BalloonConfig) -> Self {
        let tether = cfg.float_height;
        Self {
            id,
            anchor,
            tether,
            radius: cfg.radius,
            position: Vector3::new(anchor[0], anchor[1], tether),
            state: BalloonState::Free,
        }
    }

    /// Leans downwind on its tether; stays on the tether sphere.
    pub fn sway(&mut self, wind: &Vector3<f64>, per_speed: f64) {
        let mut off = [wind.x * per_speed, wind.y * per_speed];
        let lim = 0.8 * self.tether;
        let n = off[0].hypot(off[1]);
        if n > lim {
            off = [off[0] * lim / n, off[1] * lim / n];
        }
        let z = (self.tether * self.tether - off[0] * off[0] - off[1] * off[1]).sqrt();
        self.position = Vector3::new(self.anchor[0] + off[0], self.anchor[1] + off[1], z);
    }

    pub fn within_tether(&self) -> bool {
        let a = Vector3::new(self.anchor[0], self.anchor[1], 0.0);
        (self.position - a).norm() <= self.tether + 1e-9
    }
}

/// A goal hoop hanging in a vertical plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Hoop {
    pub id: usize,
    pub shape: Shape,
    pub center: Vector3<f64>,
    pub facing: f64,
    pub radius: f64,
}

impl Hoop {
    pub fn new(id: usize, cfg: &HoopConfig, radius: f64) -> Self {
        Self { id, shape: cfg.shape, center: Vector3::from(cfg.center), facing: cfg.facing, radius }
    }

    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.facing.cos(), self.facing.sin(), 0.0)
    }

    fn lateral(&self) -> Vector3<f64> {
        Vector3::new(-self.facing.sin(), self.facing.cos(), 0.0)
    }

    /// Corner points of the aperture outline (in-plane `(lateral, up)` angles
    /// measured from the lateral axis), densified so no edge is long.
    pub fn outline(&self) -> Vec<Vector3<f64>> {
        let corners: Vec<f64> = match self.shape {
            Shape::Triangle => (0..3).map(|k| FRAC_PI_2 + k as f64 * TAU / 3.0).collect(),
            Shape::Rectangle => (0..4).map(|k| TAU / 8.0 + k as f64 * TAU / 4.0).collect(),
            _ => (0..48).map(|k| k as f64 * TAU / 48.0).collect(),
        };
        let (e, up) = (self.lateral(), Vector3::z());
        let at = |a: f64| self.center + (e * a.cos() + up * a.sin()) * self.radius;
        let per_edge = if corners.len() < 8 { 12 } else { 1 };
        let mut pts = Vec::with_capacity(corners.len() * per_edge);
        for k in 0..corners.len() {
            let (p, q) = (at(corners[k]), at(corners[(k + 1) % corners.len()]));
            for s in 0..per_edge {
                pts.push(p + (q - p) * (s as f64 / per_edge as f64));
            }
        }
        pts
    }
}

/// The balloon is inside the net cylinder while the blimp moves forward fast enough.
pub fn check_capture(blimp: &RigidState, balloon: &TargetBalloon, cfg: &CaptureConfig) -> bool {
    if balloon.state != BalloonState::Free {
        return false;
    }
    let net = blimp.position - Vector3::new(0.0, 0.0, cfg.drop);
    let d = balloon.position - net;
    d.x.hypot(d.y) <= cfg.radius && d.z.abs() <= 0.5 * cfg.height && blimp.forward_speed() >= cfg.min_speed
}

/// A carrying blimp touches the hoop (COM within rim reach of its center) or
/// its COM crosses the aperture disk between two ticks.
pub fn check_delivery(prev: &Vector3<f64>, now: &Vector3<f64>, carrying: bool, hoop: &Hoop, cfg: &CaptureConfig) -> bool {
    if !carrying {
        return false;
    }
    if (now - hoop.center).norm() <= hoop.radius + cfg.delivery_margin {
        return true;
    }
    let n = hoop.normal();
    let (s0, s1) = ((prev - hoop.center).dot(&n), (now - hoop.center).dot(&n));
    if s0 * s1 > 0.0 || s0 == s1 {
        return false;
    }
    let t = s0 / (s0 - s1);
    let hit = prev + (now - prev) * t;
    (hit - hoop.center).norm() <= hoop.radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::config::WorldConfig;

    fn blimp(at: [f64; 3], speed: f64) -> RigidState {
        let mut s = RigidState::at_rest(Vector3::from(at), 0.0);
        s.velocity = Vector3::new(speed, 0.0, 0.0);
        s
    }

    fn balloon(at: [f64; 3]) -> TargetBalloon {
        let mut b = TargetBalloon::new(0, [at[0], at[1]], &BalloonConfig::default());
        b.position = Vector3::from(at);
        b
    }

    #[test]
    fn capture_rules() {
        let cfg = CaptureConfig::default();
        assert!(!check_capture(&blimp([0.0, 0.0, 2.2], 0.2), &balloon([5.0, 0.0, 1.5]), &cfg));
        assert!(check_capture(&blimp([0.0, 0.0, 2.2], 0.2), &balloon([0.1, 0.0, 1.5]), &cfg));
        assert!(!check_capture(&blimp([0.0, 0.0, 2.2], 0.05), &balloon([0.1, 0.0, 1.5]), &cfg));
        // below the cylinder
        assert!(!check_capture(&blimp([0.0, 0.0, 2.6], 0.2), &balloon([0.0, 0.0, 1.5]), &cfg));
        let mut taken = balloon([0.1, 0.0, 1.5]);
        taken.state = BalloonState::Captured(3);
        assert!(!check_capture(&blimp([0.0, 0.0, 2.2], 0.2), &taken, &cfg));
    }

    fn hoop() -> Hoop {
        Hoop::new(0, &HoopConfig { shape: Shape::Circle, center: [2.0, 7.5, 4.0], facing: 0.0 }, 0.75)
    }

    #[test]
    fn delivery_rules() {
        let cfg = CaptureConfig::default();
        let h = hoop();
        // passes straight through, far from the center at both ends
        let (a, b) = (Vector3::new(3.5, 7.6, 4.3), Vector3::new(0.5, 7.6, 4.3));
        assert!(check_delivery(&a, &b, true, &h, &cfg));
        assert!(!check_delivery(&a, &b, false, &h, &cfg));
        // grazes the rim from the front without crossing
        let rim = Vector3::new(2.2, 7.5 + 0.75 + 0.25, 4.0);
        assert!(check_delivery(&rim, &rim, true, &h, &cfg));
        // crosses the plane outside the aperture
        let (a, b) = (Vector3::new(3.0, 10.0, 4.0), Vector3::new(1.0, 10.0, 4.0));
        assert!(!check_delivery(&a, &b, true, &h, &cfg));
    }

    #[test]
    fn sway_stays_on_tether() {
        let mut b = TargetBalloon::new(0, [10.0, 7.5], &BalloonConfig::default());
        for w in [0.0, 0.3, 1.0, 5.0, 50.0] {
            b.sway(&Vector3::new(w, -0.5 * w, 0.0), 0.4);
            assert!(b.within_tether());
            assert!(b.position.z > 0.0);
        }
    }

    #[test]
    fn outlines_lie_on_the_aperture() {
        for cfg in WorldConfig::default().hoops {
            let h = Hoop::new(0, &cfg, 0.75);
            let pts = h.outline();
            assert!(pts.iter().all(|p| (p - h.center).dot(&h.normal()).abs() < 1e-12));
            assert!(pts.iter().all(|p| (p - h.center).norm() <= 0.75 + 1e-12));
        }
    }
}
