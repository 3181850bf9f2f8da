//! Color-family training: from labeled images on disk, and the built-in
//! calibration that renders synthetic balloons and hoops.

use crate::dynamics::RigidState;
use crate::perception::color::rgb_to_ab_fast;
use crate::perception::grid::{cell_means, CELL, COLS};
use crate::perception::{train_color_family, ColorFamily, Frame, PerceptionError};
use crate::world::config::{CameraConfig, RenderConfig, WorldConfig};
use crate::world::render::{Drawable, Renderer};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("cannot read {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("bad label file: {0}")]
    BadLabels(String),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
}

/// Label file: which grid cells of which image show the target.
///
/// ```json
/// {"name": "red", "cells": {"img_000.png": [[3, 4], [4, 4]]}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    pub name: String,
    /// Image file name to `[col, row]` cells.
    pub cells: BTreeMap<String, Vec<[usize; 2]>>,
}

/// Cell-mean chroma of every labeled cell.
pub fn labeled_samples(images: &Path, labels: &Labels) -> Result<Vec<[f64; 2]>, TrainingError> {
    let mut samples = Vec::new();
    for (file, cells) in &labels.cells {
        let path = images.join(file);
        let unreadable = |reason: String| TrainingError::Unreadable { path: path.display().to_string(), reason };
        let img = image::open(&path).map_err(|e| unreadable(e.to_string()))?.to_rgb8();
        let means = cell_means(&Frame::from_image(&img)).map_err(|e| unreadable(e.to_string()))?;
        for &[col, row] in cells {
            let idx = row * COLS + col;
            if col >= COLS || idx >= means.len() {
                return Err(TrainingError::BadLabels(format!("cell [{col}, {row}] outside the grid in {file}")));
            }
            samples.push(means[idx]);
        }
    }
    Ok(samples)
}

/// Trains a family from a directory of PNGs and a [`Labels`] file; an empty
/// label file has no samples.
pub fn train_from_files(images: &Path, labels_file: &Path) -> Result<(ColorFamily, usize), TrainingError> {
    let text = std::fs::read_to_string(labels_file)
        .map_err(|e| TrainingError::Unreadable { path: labels_file.display().to_string(), reason: e.to_string() })?;
    if text.trim().is_empty() {
        return Ok((train_color_family("", &[])?, 0));
    }
    let labels: Labels = serde_json::from_str(&text).map_err(|e| TrainingError::BadLabels(e.to_string()))?;
    let samples = labeled_samples(images, &labels)?;
    Ok((train_color_family(&labels.name, &samples)?, samples.len()))
}

/// Cells of a frame covered at least `min_cover` by the disk `(u, v, rho)`,
/// counted on pixel centers.
pub fn covered_cells(u: f64, v: f64, rho: f64, min_cover: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let c0 = ((u - rho) / CELL as f64).floor().max(0.0) as usize;
    let c1 = (((u + rho) / CELL as f64).floor().max(0.0) as usize).min(COLS - 1);
    let r0 = ((v - rho) / CELL as f64).floor().max(0.0) as usize;
    let r1 = (((v + rho) / CELL as f64).floor().max(0.0) as usize).min(crate::perception::grid::ROWS - 1);
    for row in r0..=r1 {
        for col in c0..=c1 {
            let mut inside = 0;
            for y in row * CELL..(row + 1) * CELL {
                for x in col * CELL..(col + 1) * CELL {
                    let (dx, dy) = (x as f64 + 0.5 - u, y as f64 + 0.5 - v);
                    if dx * dx + dy * dy <= rho * rho {
                        inside += 1;
                    }
                }
            }
            if inside as f64 >= min_cover * (CELL * CELL) as f64 {
                out.push(row * COLS + col);
            }
        }
    }
    out
}

/// Settings of the synthetic balloon calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub frames: usize,
    pub distance: [f64; 2],
    pub brightness: [f64; 2],
    pub min_cover: f64,
    pub seed: u64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self { frames: 400, distance: [1.0, 4.0], brightness: [0.8, 1.2], min_cover: 0.4, seed: 0x00B4_1100 }
    }
}

/// Renders single balloons at random distances and brightness and fits the
/// family to the chroma of every well-covered cell.
pub fn calibrate_balloon_family(
    world: &WorldConfig,
    cal: &Calibration,
) -> Result<ColorFamily, PerceptionError> {
    let r = Renderer::new(&world.camera, &world.render);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cal.seed);
    let pose = RigidState::at_rest(Vector3::new(10.0, 7.5, 2.2), 0.0);
    let cam = r.camera;
    let origin = cam.position(&pose);
    let mut samples = Vec::new();
    for _ in 0..cal.frames {
        let dist = rng.gen_range(cal.distance[0]..=cal.distance[1]);
        let (u, v) = (rng.gen_range(24.0..296.0), rng.gen_range(24.0..216.0));
        let center = origin + Vector3::new(dist, (cam.cx - u) * dist / cam.focal, (cam.cy - v) * dist / cam.focal);
        let brightness = rng.gen_range(cal.brightness[0]..=cal.brightness[1]);
        let ball = Drawable::Sphere { center, radius: world.balloon.radius, color: world.balloon.color, brightness };
        let frame = r.render(&[ball], &pose, &mut rng);
        let means = cell_means(&frame)?;
        let [pu, pv] = cam.project(&pose, &center).expect("in front");
        let rho = cam.focal * world.balloon.radius / dist;
        samples.extend(covered_cells(pu, pv, rho, cal.min_cover).into_iter().map(|i| means[i]));
    }
    train_color_family("balloon", &samples)
}

/// Fits the goal family to tape pixels of rendered hoops.
pub fn calibrate_goal_family(camera: &CameraConfig, render: &RenderConfig, frames: usize, seed: u64) -> Result<ColorFamily, PerceptionError> {
    let r = Renderer::new(camera, render);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let pose = RigidState::at_rest(Vector3::new(2.0, 7.5, 4.7), 0.0);
    let origin = r.camera.position(&pose);
    let mut samples = Vec::new();
    for _ in 0..frames {
        let dist = rng.gen_range(2.0..9.0);
        let c = origin + Vector3::new(dist, rng.gen_range(-0.3..0.3) * dist, rng.gen_range(-0.2..0.2) * dist);
        let n = 32;
        let points = (0..n)
            .map(|k| {
                let a = k as f64 / n as f64 * std::f64::consts::TAU;
                c + Vector3::new(0.0, 0.75 * a.cos(), 0.75 * a.sin())
            })
            .collect();
        let ring = Drawable::Ring { points, width: render.tape_width, color: render.hoop_color, retro: true };
        let tape = r.retro_mask(std::slice::from_ref(&ring), &pose);
        let frame = r.render(&[ring], &pose, &mut rng);
        // every 7th tape pixel keeps the sample count modest
        samples.extend(
            frame.pixels.iter().zip(&tape).filter(|(_, &t)| t).step_by(7).map(|(p, _)| rgb_to_ab_fast(*p).map(f64::from)),
        );
    }
    train_color_family("goal", &samples)
}

pub fn default_balloon_family() -> &'static ColorFamily {
    static FAMILY: OnceLock<ColorFamily> = OnceLock::new();
    FAMILY.get_or_init(|| {
        calibrate_balloon_family(&WorldConfig::default(), &Calibration::default()).expect("calibration yields samples")
    })
}

pub fn default_goal_family() -> &'static ColorFamily {
    static FAMILY: OnceLock<ColorFamily> = OnceLock::new();
    FAMILY.get_or_init(|| {
        calibrate_goal_family(&CameraConfig::default(), &RenderConfig::default(), 60, 0x60A1).expect("calibration yields samples")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balloon_family_points_at_the_balloon_color() {
        let f = default_balloon_family();
        let lab = crate::perception::rgb_to_lab(WorldConfig::default().balloon.color);
        // partially covered cells pull the mean toward gray along the same hue
        let hue = |a: f64, b: f64| b.atan2(a);
        assert!((hue(f.mu[0], f.mu[1]) - hue(lab[1], lab[2])).abs() < 0.05, "{:?}", f.mu);
        assert!(f.mu[0] > 0.5 * lab[1] && f.mu[0] < lab[1], "{:?}", f.mu);
    }

    #[test]
    fn backgrounds_lie_outside_the_balloon_family() {
        let p = default_balloon_family().precision().unwrap();
        let r = RenderConfig::default();
        for c in [r.floor, r.wall, r.blimp_color, r.hoop_color] {
            let ab = rgb_to_ab_fast(c).map(f64::from);
            assert!(p.distance_sq(ab).sqrt() > 3.3, "{c:?}");
        }
    }

    #[test]
    fn goal_family_is_yellow() {
        let f = default_goal_family();
        assert!(f.mu[1] > 50.0, "{:?}", f.mu);
        assert!(f.mu[0].abs() < 20.0, "{:?}", f.mu);
    }

    #[test]
    fn coverage_of_a_centered_disk() {
        // a disk that swallows cell (5, 5) whole
        let cells = covered_cells(88.0, 88.0, 20.0, 1.0);
        assert_eq!(cells, vec![5 * COLS + 5]);
    }
}
