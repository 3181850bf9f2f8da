use super::config::{CameraConfig, RenderConfig};
use crate::dynamics::RigidState;
use crate::perception::{Frame, FRAME_HEIGHT, FRAME_WIDTH};
use nalgebra::{Matrix3, Vector3};
use rand::RngCore;
use statrs::distribution::{ContinuousCDF, Normal};
use std::borrow::Cow;

/// Points closer than this to the image plane are not drawn.
pub const NEAR: f64 = 0.05;

/// Pinhole camera looking along body x. Image u grows to the right (body -y),
/// v grows downward (body -z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub mount: Vector3<f64>,
}

impl CameraModel {
    pub fn new(cfg: &CameraConfig) -> Self {
        let half = 0.5 * cfg.fov_deg.to_radians();
        Self {
            focal: 0.5 * FRAME_WIDTH as f64 / half.tan(),
            cx: 0.5 * FRAME_WIDTH as f64,
            cy: 0.5 * FRAME_HEIGHT as f64,
            width: FRAME_WIDTH,
            height: FRAME_HEIGHT,
            mount: Vector3::from(cfg.mount),
        }
    }

    pub fn position(&self, pose: &RigidState) -> Vector3<f64> {
        pose.position + pose.rotation() * self.mount
    }

    /// World point in camera coordinates (x forward, y left, z up).
    pub fn to_camera(&self, pose: &RigidState, p: &Vector3<f64>) -> Vector3<f64> {
        pose.rotation().transpose() * (p - self.position(pose))
    }

    pub fn project_camera(&self, c: &Vector3<f64>) -> Option<[f64; 2]> {
        (c.x > NEAR).then(|| [self.cx - self.focal * c.y / c.x, self.cy - self.focal * c.z / c.x])
    }

    pub fn project(&self, pose: &RigidState, p: &Vector3<f64>) -> Option<[f64; 2]> {
        self.project_camera(&self.to_camera(pose, p))
    }
}

/// Something the renderer can draw.
#[derive(Debug, Clone, PartialEq)]
pub enum Drawable {
    /// Shaded disk: balloons and blimp envelopes.
    Sphere { center: Vector3<f64>, radius: f64, color: [u8; 3], brightness: f64 },
    /// Closed tape outline; `retro` marks retroreflective tape.
    Ring { points: Vec<Vector3<f64>>, width: f64, color: [u8; 3], retro: bool },
}

impl Drawable {
    fn anchor(&self) -> Vector3<f64> {
        match self {
            Drawable::Sphere { center, .. } => *center,
            Drawable::Ring { points, .. } => points.iter().sum::<Vector3<f64>>() / points.len().max(1) as f64,
        }
    }
}

/// IR LED state for a capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lighting {
    Visible,
    IrOn,
    IrOff,
}

const NOISE_BITS: u32 = 12;

/// Rasterizer for the onboard camera.
#[derive(Debug, Clone)]
pub struct Renderer {
    pub camera: CameraModel,
    pub config: RenderConfig,
    noise: Box<[i16; 1 << NOISE_BITS]>,
    // per-column body-y and per-row body-z of the pixel-center rays
    ray_y: Vec<f64>,
    ray_z: Vec<f64>,
}

/// Clean raster plus which pixels are retroreflective.
struct Layer {
    rgb: Vec<[u8; 3]>,
    retro: Vec<bool>,
}

impl Renderer {
    pub fn new(camera: &CameraConfig, config: &RenderConfig) -> Self {
        let camera = CameraModel::new(camera);
        let n = 1usize << NOISE_BITS;
        let mut noise = Box::new([0i16; 1 << NOISE_BITS]);
        if config.noise_sigma > 0.0 {
            let g = Normal::new(0.0, config.noise_sigma).expect("positive sigma");
            for (k, v) in noise.iter_mut().enumerate() {
                *v = g.inverse_cdf((k as f64 + 0.5) / n as f64).round() as i16;
            }
        }
        let ray_y = (0..camera.width).map(|i| (camera.cx - (i as f64 + 0.5)) / camera.focal).collect();
        let ray_z = (0..camera.height).map(|j| (camera.cy - (j as f64 + 0.5)) / camera.focal).collect();
        Self { camera, config: config.clone(), noise, ray_y, ray_z }
    }

    pub fn render<R: RngCore>(&self, scene: &[Drawable], pose: &RigidState, rng: &mut R) -> Frame {
        let layer = self.rasterize(scene, pose, false);
        self.finish(&layer, Lighting::Visible, rng)
    }

    /// LED-on and LED-off captures of the same instant.
    pub fn render_ir_pair<R: RngCore>(&self, scene: &[Drawable], pose: &RigidState, rng: &mut R) -> (Frame, Frame) {
        let layer = self.rasterize(scene, pose, true);
        let on = self.finish(&layer, Lighting::IrOn, rng);
        let off = self.finish(&layer, Lighting::IrOff, rng);
        (on, off)
    }

    /// Pixels covered by retroreflective tape after occlusion.
    pub fn retro_mask(&self, scene: &[Drawable], pose: &RigidState) -> Vec<bool> {
        self.rasterize(scene, pose, true).retro
    }

    fn rasterize(&self, scene: &[Drawable], pose: &RigidState, track_retro: bool) -> Layer {
        let (w, h) = (self.camera.width, self.camera.height);
        let mut layer = Layer { rgb: vec![[0; 3]; w * h], retro: vec![false; if track_retro { w * h } else { 0 }] };
        self.background(pose, &mut layer.rgb);

        let mut order: Vec<(f64, usize)> = scene
            .iter()
            .enumerate()
            .map(|(i, d)| (self.camera.to_camera(pose, &d.anchor()).x, i))
            .filter(|&(x, _)| x > NEAR - 1.0)
            .collect();
        // far to near; ties keep scene order
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, i) in order {
            match &scene[i] {
                Drawable::Sphere { center, radius, color, brightness } => {
                    self.sphere(pose, center, *radius, *color, *brightness, &mut layer)
                }
                Drawable::Ring { points, width, color, retro } => {
                    self.ring(pose, points, *width, *color, *retro && track_retro, &mut layer)
                }
            }
        }
        layer
    }

    fn background(&self, pose: &RigidState, rgb: &mut [[u8; 3]]) {
        // world-z component of each pixel ray decides floor or wall
        let r: Matrix3<f64> = pose.rotation();
        let (a, b, c) = (r[(2, 0)], r[(2, 1)], r[(2, 2)]);
        let (floor, wall) = (self.config.floor, self.config.wall);
        let w = self.camera.width;
        for (j, row) in rgb.chunks_exact_mut(w).enumerate() {
            let base = a + c * self.ray_z[j];
            let below = |y: f64| base + b * y < 0.0;
            let pick = |under: bool| if under { floor } else { wall };
            // the test is monotone along a row, so each row is one split
            let first = below(self.ray_y[0]);
            let k = self.ray_y.partition_point(|&y| below(y) == first);
            row[..k].fill(pick(first));
            row[k..].fill(pick(!first));
        }
    }

    fn sphere(&self, pose: &RigidState, center: &Vector3<f64>, radius: f64, color: [u8; 3], brightness: f64, layer: &mut Layer) {
        let cam = &self.camera;
        let pc = cam.to_camera(pose, center);
        let Some([u, v]) = cam.project_camera(&pc) else {
            return;
        };
        let rho = cam.focal * radius / pc.x;
        if !rho.is_finite() || rho <= 0.0 {
            return;
        }
        let (x0, x1) = span(u - rho, u + rho, cam.width);
        let (y0, y1) = span(v - rho, v + rho, cam.height);
        let r2 = rho * rho;
        for j in y0..y1 {
            let dy = j as f64 + 0.5 - v;
            for i in x0..x1 {
                let dx = i as f64 + 0.5 - u;
                let d2 = dx * dx + dy * dy;
                if d2 <= r2 {
                    let shade = brightness * (1.0 - 0.3 * d2 / r2);
                    let idx = j * cam.width + i;
                    layer.rgb[idx] = scale(color, shade);
                    if let Some(r) = layer.retro.get_mut(idx) {
                        *r = false;
                    }
                }
            }
        }
    }

    fn ring(&self, pose: &RigidState, points: &[Vector3<f64>], width: f64, color: [u8; 3], retro: bool, layer: &mut Layer) {
        let cam = &self.camera;
        let n = points.len();
        let local: Vec<Vector3<f64>> = points.iter().map(|p| cam.to_camera(pose, p)).collect();
        for k in 0..n {
            let (mut a, mut b) = (local[k], local[(k + 1) % n]);
            if a.x <= NEAR && b.x <= NEAR {
                continue;
            }
            if a.x <= NEAR || b.x <= NEAR {
                let t = (NEAR + 1e-9 - a.x) / (b.x - a.x);
                let cut = a + (b - a) * t;
                if a.x <= NEAR {
                    a = cut;
                } else {
                    b = cut;
                }
            }
            let (Some(pa), Some(pb)) = (cam.project_camera(&a), cam.project_camera(&b)) else {
                continue;
            };
            let depth = 0.5 * (a.x + b.x);
            let hw = (0.5 * cam.focal * width / depth).max(0.6);
            self.segment(pa, pb, hw, color, retro, layer);
        }
    }

    fn segment(&self, a: [f64; 2], b: [f64; 2], hw: f64, color: [u8; 3], retro: bool, layer: &mut Layer) {
        let cam = &self.camera;
        let (x0, x1) = span(a[0].min(b[0]) - hw, a[0].max(b[0]) + hw, cam.width);
        let (y0, y1) = span(a[1].min(b[1]) - hw, a[1].max(b[1]) + hw, cam.height);
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let len2 = ex * ex + ey * ey;
        let hw2 = hw * hw;
        for j in y0..y1 {
            let py = j as f64 + 0.5 - a[1];
            for i in x0..x1 {
                let px = i as f64 + 0.5 - a[0];
                let t = if len2 > 0.0 { ((px * ex + py * ey) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let (dx, dy) = (px - t * ex, py - t * ey);
                if dx * dx + dy * dy <= hw2 {
                    let idx = j * cam.width + i;
                    layer.rgb[idx] = color;
                    if let Some(r) = layer.retro.get_mut(idx) {
                        *r = retro;
                    }
                }
            }
        }
    }

    /// Applies lighting and sensor noise.
    fn finish<R: RngCore>(&self, layer: &Layer, lighting: Lighting, rng: &mut R) -> Frame {
        let gain = match lighting {
            Lighting::Visible => 1.0,
            _ => 1.0 - self.config.ir_dim,
        };
        let lit: Cow<[[u8; 3]]> = match lighting {
            Lighting::Visible => Cow::Borrowed(&layer.rgb),
            _ => {
                let table: Vec<u8> = (0..=255u8).map(|v| scale([v, 0, 0], gain)[0]).collect();
                let mut v: Vec<[u8; 3]> = layer.rgb.iter().map(|c| c.map(|x| table[x as usize])).collect();
                if lighting == Lighting::IrOn {
                    for (px, &r) in v.iter_mut().zip(&layer.retro) {
                        if r {
                            *px = [250, 250, 245];
                        }
                    }
                }
                Cow::Owned(v)
            }
        };
        let mut pixels = vec![[0u8; 3]; lit.len()];
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at run time
            unsafe { add_noise_avx2(&lit, &mut pixels, &self.noise, rng) };
        } else {
            add_noise(&lit, &mut pixels, &self.noise, rng);
        }
        #[cfg(not(target_arch = "x86_64"))]
        add_noise(&lit, &mut pixels, &self.noise, rng);
        Frame { width: self.camera.width, height: self.camera.height, pixels, ir: lighting == Lighting::IrOn }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn add_noise_avx2<R: RngCore>(lit: &[[u8; 3]], out: &mut [[u8; 3]], noise: &[i16; 1 << NOISE_BITS], rng: &mut R) {
    add_noise(lit, out, noise, rng)
}

#[inline(always)]
fn add_noise<R: RngCore>(lit: &[[u8; 3]], out: &mut [[u8; 3]], noise: &[i16; 1 << NOISE_BITS], rng: &mut R) {
    // 64 pixels per block; pixel p, channel c of each quad takes 16-bit chunk 3p + c of three draws
    const BLOCK: usize = 64 * 3;
    let mask = (1 << NOISE_BITS) - 1;
    let mut n = [0i16; BLOCK];
    for (src, dst) in lit.as_flattened().chunks(BLOCK).zip(out.as_flattened_mut().chunks_mut(BLOCK)) {
        for q in n[..src.len()].chunks_exact_mut(12) {
            let r = [rng.next_u64(), rng.next_u64(), rng.next_u64()];
            for (k, v) in q.iter_mut().enumerate() {
                let bits = ((r[k / 4] >> (16 * (k % 4))) as u16 >> (16 - NOISE_BITS)) as usize;
                *v = noise[bits & mask];
            }
        }
        let whole = src.len() / 12 * 12;
        for ((d, &s), &v) in dst[..whole].iter_mut().zip(src).zip(&n) {
            *d = (s as i16 + v).clamp(0, 255) as u8;
        }
    }
}

fn span(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    let a = lo.floor().max(0.0);
    let b = (hi.ceil() + 1.0).min(n as f64);
    if !(a < b) {
        return (0, 0);
    }
    (a as usize, b as usize)
}

fn scale(c: [u8; 3], k: f64) -> [u8; 3] {
    c.map(|v| (v as f64 * k).round().clamp(0.0, 255.0) as u8)
}
