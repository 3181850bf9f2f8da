//! CIELAB conversion and chroma color families.

use super::PerceptionError;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Regularization added to every trained covariance.
pub const COVARIANCE_EPS: f64 = 1e-3;
pub const MIN_SAMPLES: usize = 8;

// D65 reference white.
const XN: f64 = 0.950_47;
const YN: f64 = 1.0;
const ZN: f64 = 1.088_83;

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// sRGB (D65) to CIELAB `(L, a, b)`.
pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let xyz: Vec<f64> = SRGB_TO_XYZ.iter().map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]).collect();
    let fx = lab_f(xyz[0] / XN);
    let fy = lab_f(xyz[1] / YN);
    let fz = lab_f(xyz[2] / ZN);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Pixels converted per batch on the hot path.
pub(crate) const LANES: usize = 16;

pub(crate) struct FastLab {
    // linear[c * 256 + v] holds channel c's contribution to (X/Xn, Y/Yn, Z/Zn)
    linear: [[f32; 3]; 256 * 3],
}

pub(crate) fn fast_lab() -> &'static FastLab {
    static TABLE: OnceLock<FastLab> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut linear = [[0f32; 3]; 256 * 3];
        for v in 0..256 {
            let l = srgb_to_linear(v as u8);
            for c in 0..3 {
                linear[c * 256 + v] = [
                    (SRGB_TO_XYZ[0][c] * l / XN) as f32,
                    (SRGB_TO_XYZ[1][c] * l / YN) as f32,
                    (SRGB_TO_XYZ[2][c] * l / ZN) as f32,
                ];
            }
        }
        FastLab { linear }
    })
}

/// `lab_f` in f32 without tables or branches, so batches vectorize.
#[inline(always)]
fn lab_f32(t: f32) -> f32 {
    const DELTA: f32 = 6.0 / 29.0;
    let x = t.max(1e-6);
    // exponent-thirding seed, then Newton on y^3 = x
    let mut y = f32::from_bits(((((x.to_bits() as i32) as f32 * (1.0 / 3.0)) as i32).wrapping_add(0x2A51_4067)) as u32);
    for _ in 0..2 {
        y = (2.0 * y + x / (y * y)) * (1.0 / 3.0);
    }
    let lin = t * (1.0 / (3.0 * DELTA * DELTA)) + 4.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        y
    } else {
        lin
    }
}

impl FastLab {
    #[inline(always)]
    fn xyz(&self, rgb: [u8; 3]) -> [f32; 3] {
        let r = self.linear[rgb[0] as usize];
        let g = self.linear[256 + rgb[1] as usize];
        let b = self.linear[512 + rgb[2] as usize];
        [r[0] + g[0] + b[0], r[1] + g[1] + b[1], r[2] + g[2] + b[2]]
    }

    #[inline]
    pub(crate) fn ab(&self, rgb: [u8; 3]) -> [f32; 2] {
        let [x, y, z] = self.xyz(rgb);
        let (fx, fy, fz) = (lab_f32(x), lab_f32(y), lab_f32(z));
        [500.0 * (fx - fy), 200.0 * (fy - fz)]
    }

    /// Sum of `(a, b)` over a batch of exactly [`LANES`] pixels; equal to
    /// adding up [`FastLab::ab`] in order.
    #[inline(always)]
    pub(crate) fn ab_sum(&self, px: &[[u8; 3]]) -> [f32; 2] {
        let mut x = [0f32; LANES];
        let mut y = [0f32; LANES];
        let mut z = [0f32; LANES];
        for (i, &p) in px[..LANES].iter().enumerate() {
            [x[i], y[i], z[i]] = self.xyz(p);
        }
        let mut a = [0f32; LANES];
        let mut b = [0f32; LANES];
        for i in 0..LANES {
            let (fx, fy, fz) = (lab_f32(x[i]), lab_f32(y[i]), lab_f32(z[i]));
            a[i] = 500.0 * (fx - fy);
            b[i] = 200.0 * (fy - fz);
        }
        let mut acc = [0f32; 2];
        for i in 0..LANES {
            acc[0] += a[i];
            acc[1] += b[i];
        }
        acc
    }
}

/// Arithmetic `(a, b)` used on the per-frame hot path; agrees with
/// [`rgb_to_lab`] to a few thousandths of a unit.
#[inline]
pub fn rgb_to_ab_fast(rgb: [u8; 3]) -> [f32; 2] {
    fast_lab().ab(rgb)
}

/// A 2-D Gaussian over the `(a, b)` chroma plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ColorFamily {
    pub name: String,
    pub mu: [f64; 2],
    pub sigma: [[f64; 2]; 2],
}

/// Inverse covariance with the mean, ready for repeated distance queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Precision {
    pub mu: [f64; 2],
    pub inv: [[f64; 2]; 2],
}

impl Precision {
    #[inline]
    pub fn distance_sq(&self, ab: [f64; 2]) -> f64 {
        let dx = ab[0] - self.mu[0];
        let dy = ab[1] - self.mu[1];
        self.inv[0][0] * dx * dx + 2.0 * self.inv[0][1] * dx * dy + self.inv[1][1] * dy * dy
    }
}

impl ColorFamily {
    pub fn precision(&self) -> Result<Precision, PerceptionError> {
        let [[a, b], [c, d]] = self.sigma;
        if !self.mu.iter().chain(self.sigma.iter().flatten()).all(|v| v.is_finite()) || (b - c).abs() > 1e-9 * (b.abs() + 1.0) {
            return Err(PerceptionError::SingularCovariance);
        }
        let det = a * d - b * c;
        if !(det > 0.0 && a > 0.0) {
            return Err(PerceptionError::SingularCovariance);
        }
        Ok(Precision { mu: self.mu, inv: [[d / det, -b / det], [-c / det, a / det]] })
    }

    /// Eigenvalues of `sigma`, largest first.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [_, d]] = self.sigma;
        let mean = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mean + r, mean - r]
    }
}

/// Mean and population covariance (plus `COVARIANCE_EPS * I`) of chroma samples.
pub fn train_color_family(name: &str, samples: &[[f64; 2]]) -> Result<ColorFamily, PerceptionError> {
    if samples.len() < MIN_SAMPLES {
        return Err(PerceptionError::InsufficientSamples { got: samples.len(), need: MIN_SAMPLES });
    }
    let n = samples.len() as f64;
    let mu = [samples.iter().map(|s| s[0]).sum::<f64>() / n, samples.iter().map(|s| s[1]).sum::<f64>() / n];
    let mut s = [[0.0; 2]; 2];
    for p in samples {
        let d = [p[0] - mu[0], p[1] - mu[1]];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] += d[i] * d[j];
            }
        }
    }
    for (i, row) in s.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v /= n;
        }
        row[i] += COVARIANCE_EPS;
    }
    Ok(ColorFamily { name: name.to_string(), mu, sigma: s })
}

/// `sqrt((x - mu)^T Sigma^-1 (x - mu))`
pub fn mahalanobis(mu_c: [f64; 2], family: &ColorFamily) -> Result<f64, PerceptionError> {
    Ok(family.precision()?.distance_sq(mu_c).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Independent conversion through the published CIE formulas, written
    /// with the 1976 constants (epsilon = 216/24389, kappa = 24389/27).
    fn oracle_lab(rgb: [u8; 3]) -> [f64; 3] {
        let lin = |c: u8| {
            let v = c as f64 / 255.0;
            if v > 0.04045 {
                ((v + 0.055) / 1.055).powf(2.4)
            } else {
                v / 12.92
            }
        };
        let (r, g, b) = (lin(rgb[0]), lin(rgb[1]), lin(rgb[2]));
        let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
        let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
        let z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
        let eps = 216.0 / 24389.0;
        let kappa = 24389.0 / 27.0;
        let f = |t: f64| if t > eps { t.cbrt() } else { (kappa * t + 16.0) / 116.0 };
        let (fx, fy, fz) = (f(x), f(y), f(z));
        [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
    }

    #[test]
    fn black_and_white() {
        let k = rgb_to_lab([0, 0, 0]);
        assert_abs_diff_eq!(k[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(k[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(k[2], 0.0, epsilon = 1e-9);
        let w = rgb_to_lab([255, 255, 255]);
        assert_abs_diff_eq!(w[0], 100.0, epsilon = 1e-3);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-3);
        assert_abs_diff_eq!(w[2], 0.0, epsilon = 1e-3);
    }

    #[test]
    fn pure_red() {
        let lab = rgb_to_lab([255, 0, 0]);
        let o = oracle_lab([255, 0, 0]);
        for i in 0..3 {
            assert_abs_diff_eq!(lab[i], o[i], epsilon = 1e-9);
        }
        assert_abs_diff_eq!(lab[0], 53.24, epsilon = 0.01);
        assert_abs_diff_eq!(lab[1], 80.09, epsilon = 0.01);
        assert_abs_diff_eq!(lab[2], 67.20, epsilon = 0.01);
    }

    proptest! {
        #[test]
        fn matches_oracle(r: u8, g: u8, b: u8) {
            let lab = rgb_to_lab([r, g, b]);
            let o = oracle_lab([r, g, b]);
            for i in 0..3 {
                prop_assert!((lab[i] - o[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn fast_path_tracks_exact(r: u8, g: u8, b: u8) {
            let lab = rgb_to_lab([r, g, b]);
            let ab = rgb_to_ab_fast([r, g, b]);
            prop_assert!((ab[0] as f64 - lab[1]).abs() < 0.01, "{:?} vs {:?}", ab, lab);
            prop_assert!((ab[1] as f64 - lab[2]).abs() < 0.01, "{:?} vs {:?}", ab, lab);
        }
    }

    #[test]
    fn batch_sum_equals_per_pixel_sum() {
        let lab = fast_lab();
        let px: Vec<[u8; 3]> = (0..LANES as u8).map(|i| [i.wrapping_mul(37), 200 - i * 9, i * 13]).collect();
        let mut want = [0f32; 2];
        for &p in &px {
            let ab = lab.ab(p);
            want[0] += ab[0];
            want[1] += ab[1];
        }
        assert_eq!(lab.ab_sum(&px), want);
    }

    #[test]
    fn cube_root_over_the_unit_range() {
        for k in 0..=100_000 {
            let t = k as f64 / 90_000.0;
            assert!((lab_f32(t as f32) as f64 - lab_f(t)).abs() < 5e-6, "{t}");
        }
    }

    #[test]
    fn identical_samples_give_eps_identity() {
        let f = train_color_family("x", &[[3.0, -2.0]; 8]).unwrap();
        assert_eq!(f.mu, [3.0, -2.0]);
        assert_eq!(f.sigma, [[COVARIANCE_EPS, 0.0], [0.0, COVARIANCE_EPS]]);
    }

    #[test]
    fn population_covariance_of_a_cross() {
        let cross = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        assert_eq!(
            train_color_family("x", &cross),
            Err(PerceptionError::InsufficientSamples { got: 4, need: 8 })
        );
        let doubled: Vec<_> = cross.iter().chain(cross.iter()).copied().collect();
        let f = train_color_family("x", &doubled).unwrap();
        assert_abs_diff_eq!(f.mu[0], 0.0);
        assert_abs_diff_eq!(f.mu[1], 0.0);
        // sum of squares 2 per axis over 4 points
        assert_abs_diff_eq!(f.sigma[0][0], 0.5 + COVARIANCE_EPS, epsilon = 1e-15);
        assert_abs_diff_eq!(f.sigma[1][1], 0.5 + COVARIANCE_EPS, epsilon = 1e-15);
        assert_abs_diff_eq!(f.sigma[0][1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn separated_clusters_do_not_overlap() {
        let ring = |cx: f64, cy: f64| -> Vec<[f64; 2]> {
            (0..16).map(|i| {
                let a = i as f64 * std::f64::consts::PI / 8.0;
                [cx + a.cos(), cy + a.sin()]
            }).collect()
        };
        let a = train_color_family("a", &ring(0.0, 0.0)).unwrap();
        let b = train_color_family("b", &ring(20.0, 0.0)).unwrap();
        // the 3-sigma ellipses are circles of radius 3 * sqrt(0.5 + eps)
        let r = 3.0 * a.eigenvalues()[0].sqrt();
        assert!(r + 3.0 * b.eigenvalues()[0].sqrt() < 20.0);
        assert!(mahalanobis(b.mu, &a).unwrap() > 6.0);
        assert!(mahalanobis(a.mu, &b).unwrap() > 6.0);
    }

    #[test]
    fn mahalanobis_hand_values() {
        let fam = |s: [[f64; 2]; 2]| ColorFamily { name: "t".into(), mu: [0.0, 0.0], sigma: s };
        assert_eq!(mahalanobis([0.0, 0.0], &fam([[1.0, 0.0], [0.0, 1.0]])).unwrap(), 0.0);
        assert_abs_diff_eq!(mahalanobis([4.0, 0.0], &fam([[4.0, 0.0], [0.0, 1.0]])).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mahalanobis([3.0, 4.0], &fam([[1.0, 0.0], [0.0, 1.0]])).unwrap(), 5.0, epsilon = 1e-15);
        assert_eq!(
            mahalanobis([1.0, 0.0], &fam([[1.0, 1.0], [1.0, 1.0]])),
            Err(PerceptionError::SingularCovariance)
        );
    }

    #[test]
    fn family_json_shape() {
        let f = ColorFamily { name: "red".into(), mu: [60.0, 40.0], sigma: [[4.0, 1.0], [1.0, 3.0]] };
        let v: serde_json::Value = serde_json::to_value(&f).unwrap();
        assert_eq!(v["name"], "red");
        assert_eq!(v["mu"][1], 40.0);
        assert_eq!(v["sigma"][0][1], 1.0);
        let back: ColorFamily = serde_json::from_value(v).unwrap();
        assert_eq!(back, f);
    }
}
