use super::config::AcUnit;
use nalgebra::Vector3;
use rand::Rng;
use statrs::distribution::Normal;

/// Gusty jets from the AC outlets. Each outlet's speed is an
/// Ornstein-Uhlenbeck process reverting to its mean; the jets add up with a
/// `1 / (1 + r^2)` falloff and the total is capped.
#[derive(Debug, Clone, PartialEq)]
pub struct WindField {
    units: Vec<AcUnit>,
    dirs: Vec<Vector3<f64>>,
    speeds: Vec<f64>,
    cap: f64,
}

impl WindField {
    /// Starts still: every jet speed is zero.
    pub fn new(units: &[AcUnit], cap: f64) -> Self {
        let dirs = units.iter().map(|u| Vector3::from(u.direction).normalize()).collect();
        Self { units: units.to_vec(), dirs, speeds: vec![0.0; units.len()], cap }
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    /// Exact OU transition over `dt`.
    pub fn advance<R: Rng>(&mut self, dt: f64, rng: &mut R) {
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for (s, u) in self.speeds.iter_mut().zip(&self.units) {
            let decay = (-dt / u.tau).exp();
            let spread = u.gust * (1.0 - decay * decay).sqrt();
            let z: f64 = rng.sample(unit);
            *s = (u.mean_speed + (*s - u.mean_speed) * decay + spread * z).max(0.0);
        }
    }

    pub fn at(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let mut w = Vector3::zeros();
        for ((u, d), &s) in self.units.iter().zip(&self.dirs).zip(&self.speeds) {
            let r2 = (p - Vector3::from(u.position)).norm_squared();
            w += d * (s / (1.0 + r2));
        }
        let n = w.norm();
        if n > self.cap {
            w *= self.cap / n;
        }
        w
    }
}
