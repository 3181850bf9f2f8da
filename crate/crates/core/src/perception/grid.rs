use super::color::{fast_lab, ColorFamily, Precision, LANES};
use super::frame::{Frame, FRAME_HEIGHT, FRAME_WIDTH};
use super::PerceptionError;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

pub const CELL: usize = 16;
pub const COLS: usize = FRAME_WIDTH / CELL;
pub const ROWS: usize = FRAME_HEIGHT / CELL;
pub const N_CELLS: usize = COLS * ROWS;

/// Pixel center of a cell.
pub fn cell_center(col: usize, row: usize) -> [f64; 2] {
    [(col * CELL + CELL / 2) as f64, (row * CELL + CELL / 2) as f64]
}

/// Mean `(a, b)` of every cell, row-major.
pub fn cell_means(frame: &Frame) -> Result<Vec<[f64; 2]>, PerceptionError> {
    const _: () = assert!(CELL == LANES);
    if frame.width != FRAME_WIDTH || frame.height != FRAME_HEIGHT {
        return Err(PerceptionError::DimensionMismatch);
    }
    let mut sums = vec![[0f32; 2]; N_CELLS];
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at run time
        unsafe { cell_sums_avx2(&frame.pixels, &mut sums) };
    } else {
        cell_sums(&frame.pixels, &mut sums);
    }
    #[cfg(not(target_arch = "x86_64"))]
    cell_sums(&frame.pixels, &mut sums);
    let n = (CELL * CELL) as f64;
    Ok(sums.into_iter().map(|s| [s[0] as f64 / n, s[1] as f64 / n]).collect())
}

// Wider vectors only; no FMA, so results match the baseline build bit for bit.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn cell_sums_avx2(pixels: &[[u8; 3]], sums: &mut [[f32; 2]]) {
    cell_sums(pixels, sums)
}

#[inline(always)]
fn cell_sums(pixels: &[[u8; 3]], sums: &mut [[f32; 2]]) {
    let lab = fast_lab();
    for (y, row) in pixels.chunks_exact(FRAME_WIDTH).enumerate() {
        let base = (y / CELL) * COLS;
        for (col, chunk) in row.chunks_exact(CELL).enumerate() {
            let acc = lab.ab_sum(chunk);
            let s = &mut sums[base + col];
            s[0] += acc[0];
            s[1] += acc[1];
        }
    }
}

/// Cells whose mean lies within `d_thresh` Mahalanobis units of the family.
pub fn activate_means(means: &[[f64; 2]], precision: &Precision, d_thresh: f64) -> Vec<bool> {
    let d2 = d_thresh * d_thresh;
    means.iter().map(|&m| d_thresh > 0.0 && precision.distance_sq(m) < d2).collect()
}

pub fn activate_cells(frame: &Frame, family: &ColorFamily, d_thresh: f64) -> Result<Vec<bool>, PerceptionError> {
    let precision = family.precision()?;
    Ok(activate_means(&cell_means(frame)?, &precision, d_thresh))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub l_hit: f64,
    pub l_miss: f64,
    pub l_min: f64,
    pub l_max: f64,
    /// Probability above which a cell counts as occupied.
    pub p_act: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        // p_hit = 0.8, p_miss = 0.3
        Self { l_hit: (0.8f64 / 0.2).ln(), l_miss: (0.3f64 / 0.7).ln(), l_min: -6.0, l_max: 6.0, p_act: 0.7 }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), String> {
        let ok = [self.l_hit, self.l_miss, self.l_min, self.l_max, self.p_act].iter().all(|v| v.is_finite())
            && self.l_min < 0.0
            && self.l_max > 0.0
            && self.p_act > 0.0
            && self.p_act < 1.0;
        if ok {
            Ok(())
        } else {
            Err("filter needs finite increments, l_min < 0 < l_max and p_act in (0, 1)".into())
        }
    }
}

pub fn probability(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Recursive per-cell occupancy belief in log-odds form.
#[derive(Debug, Clone, PartialEq)]
pub struct LogOddsGrid {
    pub params: FilterParams,
    cells: Vec<f64>,
}

impl LogOddsGrid {
    pub fn new(params: FilterParams) -> Self {
        Self { params, cells: vec![0.0; N_CELLS] }
    }

    pub fn log_odds(&self) -> &[f64] {
        &self.cells
    }

    pub fn reset(&mut self) {
        self.cells.iter_mut().for_each(|l| *l = 0.0);
    }

    pub fn update(&mut self, activations: &[bool]) -> Result<(), PerceptionError> {
        if activations.len() != self.cells.len() {
            return Err(PerceptionError::DimensionMismatch);
        }
        let p = &self.params;
        for (l, &hit) in self.cells.iter_mut().zip(activations) {
            *l = (*l + if hit { p.l_hit } else { p.l_miss }).clamp(p.l_min, p.l_max);
        }
        Ok(())
    }

    pub fn occupied(&self) -> Vec<bool> {
        let p_act = self.params.p_act;
        self.cells.iter().map(|&l| probability(l) > p_act).collect()
    }

    pub fn detect(&self) -> Detection {
        largest_cluster(&self.occupied(), COLS, ROWS)
    }
}

/// Largest cluster of occupied cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Detection {
    pub center: [f64; 2],
    pub size: usize,
    pub valid: bool,
}

impl Detection {
    pub const NONE: Detection = Detection { center: [0.0, 0.0], size: 0, valid: false };
}

/// 4-connected components; the largest wins, ties going to the component
/// found first in a row-major scan.
pub fn largest_cluster(occupied: &[bool], cols: usize, rows: usize) -> Detection {
    assert_eq!(occupied.len(), cols * rows);
    let mut seen = vec![false; occupied.len()];
    let mut best = Detection::NONE;
    let mut stack = Vec::new();
    for start in 0..occupied.len() {
        if !occupied[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
        while let Some(i) = stack.pop() {
            let (c, r) = (i % cols, i / cols);
            let [x, y] = cell_center(c, r);
            n += 1;
            sx += x;
            sy += y;
            let mut visit = |j: usize| {
                if occupied[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < cols {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - cols);
            }
            if r + 1 < rows {
                visit(i + cols);
            }
        }
        if n > best.size {
            best = Detection { center: [sx / n as f64, sy / n as f64], size: n, valid: true };
        }
    }
    best
}
