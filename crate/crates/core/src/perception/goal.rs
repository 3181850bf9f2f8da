//! Goal hoop detection: mask, largest blob, outline polygon, shape filter.

use super::color::{rgb_to_ab_fast, Precision};
use super::frame::{diff_frames, Frame, Mask};
use super::PerceptionError;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Triangle,
    Rectangle,
    Circle,
    Unknown,
}

impl Shape {
    pub fn from_vertices(n: usize) -> Shape {
        match n {
            3 => Shape::Triangle,
            4 => Shape::Rectangle,
            n if n >= 8 => Shape::Circle,
            _ => Shape::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    /// Per-pixel test against the goal color family.
    Color,
    /// Difference of an IR-on and an IR-off frame.
    Ir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct GoalParams {
    pub source: MaskSource,
    /// Mahalanobis acceptance radius of the color path.
    pub d_thresh: f64,
    /// Difference-image threshold of the IR path.
    pub luminance: u8,
    /// Blobs with fewer pixels are noise.
    pub min_blob: usize,
    /// Polygon tolerance as a fraction of the outline length.
    pub epsilon: f64,
}

impl Default for GoalParams {
    fn default() -> Self {
        Self { source: MaskSource::Color, d_thresh: 3.0, luminance: 60, min_blob: 30, epsilon: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GoalDetection {
    /// Bounding-box center, px.
    pub center: [f64; 2],
    /// Bounding-box area, px.
    pub size: f64,
    pub shape: Shape,
    pub valid: bool,
}

impl GoalDetection {
    pub const NONE: GoalDetection = GoalDetection { center: [0.0, 0.0], size: 0.0, shape: Shape::Unknown, valid: false };
}

pub fn color_mask(frame: &Frame, precision: &Precision, d_thresh: f64) -> Mask {
    let d2 = d_thresh * d_thresh;
    Mask {
        width: frame.width,
        height: frame.height,
        data: frame
            .pixels
            .iter()
            .map(|&px| {
                let ab = rgb_to_ab_fast(px);
                d_thresh > 0.0 && precision.distance_sq([ab[0] as f64, ab[1] as f64]) < d2
            })
            .collect(),
    }
}

pub fn ir_mask(on: &Frame, off: &Frame, luminance: u8) -> Result<Mask, PerceptionError> {
    Ok(diff_frames(on, off)?.threshold(luminance))
}

/// A connected blob and its bounding box `[x0, y0, x1, y1]` (inclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub mask: Mask,
    pub count: usize,
    pub bbox: [usize; 4],
}

const NEIGHBORS: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

/// Largest 8-connected blob with at least `min_size` pixels.
pub fn largest_blob(mask: &Mask, min_size: usize) -> Option<Blob> {
    let (w, h) = (mask.width, mask.height);
    let mut label = vec![0u32; w * h];
    let mut best: Option<(u32, usize, [usize; 4])> = None;
    let mut stack = Vec::new();
    let mut next = 0u32;
    for start in 0..w * h {
        if !mask.data[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut count = 0;
        let mut bbox = [usize::MAX, usize::MAX, 0, 0];
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            count += 1;
            bbox = [bbox[0].min(x), bbox[1].min(y), bbox[2].max(x), bbox[3].max(y)];
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if mask.get(nx, ny) {
                    let j = ny as usize * w + nx as usize;
                    if label[j] == 0 {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
        if count >= min_size && best.is_none_or(|b| count > b.1) {
            best = Some((next, count, bbox));
        }
    }
    best.map(|(id, count, bbox)| Blob {
        mask: Mask { width: w, height: h, data: label.iter().map(|&l| l == id).collect() },
        count,
        bbox,
    })
}

/// Outer boundary by Moore-neighbor tracing, clockwise from the first pixel
/// in raster order. Stops when the walk is about to repeat its first step.
pub fn trace_contour(mask: &Mask) -> Vec<(i64, i64)> {
    let Some(first) = mask.data.iter().position(|&v| v) else {
        return Vec::new();
    };
    let start = ((first % mask.width) as i64, (first / mask.width) as i64);
    let dir_index = |d: (i64, i64)| NEIGHBORS.iter().position(|&n| n == d).expect("unit offset");
    let mut contour = vec![start];
    let mut p = start;
    // west of the first raster pixel is background
    let mut back = 0usize;
    let mut second = None;
    let limit = 4 * mask.data.len() + 8;
    for _ in 0..limit {
        let Some(d) = (1..=8).map(|k| (back + k) % 8).find(|&d| mask.get(p.0 + NEIGHBORS[d].0, p.1 + NEIGHBORS[d].1))
        else {
            break;
        };
        let q = (p.0 + NEIGHBORS[d].0, p.1 + NEIGHBORS[d].1);
        if p == start {
            match second {
                None => second = Some(q),
                Some(s) if s == q => break,
                // a pinch at the start pixel: the outline passes it again
                Some(_) => contour.push(start),
            }
        }
        let prev = NEIGHBORS[(d + 7) % 8];
        back = dir_index((prev.0 - NEIGHBORS[d].0, prev.1 - NEIGHBORS[d].1));
        p = q;
        if p != start {
            contour.push(p);
        }
    }
    contour
}

fn point_line_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return (p.0 - a.0).hypot(p.1 - a.1);
    }
    ((p.0 - a.0) * dy - (p.1 - a.1) * dx).abs() / len
}

fn rdp(points: &[(f64, f64)], eps: f64, out: &mut Vec<(f64, f64)>) {
    // emits every kept vertex except the final endpoint
    let (a, b) = (points[0], points[points.len() - 1]);
    let mut worst = (0, 0.0);
    for (i, &p) in points.iter().enumerate().take(points.len() - 1).skip(1) {
        let d = point_line_distance(p, a, b);
        if d > worst.1 {
            worst = (i, d);
        }
    }
    if worst.1 > eps {
        rdp(&points[..=worst.0], eps, out);
        rdp(&points[worst.0..], eps, out);
    } else {
        out.push(a);
    }
}

pub fn perimeter(contour: &[(i64, i64)]) -> f64 {
    let n = contour.len();
    (0..n)
        .map(|i| {
            let (a, b) = (contour[i], contour[(i + 1) % n]);
            ((a.0 - b.0) as f64).hypot((a.1 - b.1) as f64)
        })
        .sum()
}

/// Closed-curve polygon simplification. Splits the loop at its first point
/// and the point farthest from it, simplifies both halves, then drops
/// vertices lying within `eps` of the line through their neighbors.
pub fn approx_polygon(contour: &[(i64, i64)], eps: f64) -> Vec<(f64, f64)> {
    let pts: Vec<(f64, f64)> = contour.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    if pts.len() < 3 {
        return pts;
    }
    let far = (1..pts.len())
        .max_by(|&i, &j| {
            let d = |k: usize| (pts[k].0 - pts[0].0).hypot(pts[k].1 - pts[0].1);
            d(i).total_cmp(&d(j)).then(j.cmp(&i))
        })
        .expect("at least three points");
    let mut poly = Vec::new();
    rdp(&pts[..=far], eps, &mut poly);
    let mut back: Vec<_> = pts[far..].to_vec();
    back.push(pts[0]);
    rdp(&back, eps, &mut poly);

    while poly.len() > 3 {
        let n = poly.len();
        let (i, d) = (0..n)
            .map(|i| (i, point_line_distance(poly[i], poly[(i + n - 1) % n], poly[(i + 1) % n])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        if d >= eps {
            break;
        }
        poly.remove(i);
    }
    poly
}

/// Largest blob of `mask`, classified by the vertex count of its outline.
pub fn detect_goal(mask: &Mask, params: &GoalParams) -> GoalDetection {
    let Some(blob) = largest_blob(mask, params.min_blob.max(1)) else {
        return GoalDetection::NONE;
    };
    let contour = trace_contour(&blob.mask);
    let eps = params.epsilon * perimeter(&contour);
    let shape = Shape::from_vertices(approx_polygon(&contour, eps).len());
    if shape == Shape::Unknown {
        return GoalDetection::NONE;
    }
    let [x0, y0, x1, y1] = blob.bbox;
    GoalDetection {
        center: [(x0 + x1 + 1) as f64 / 2.0, (y0 + y1 + 1) as f64 / 2.0],
        size: ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64,
        shape,
        valid: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(w: usize, h: usize, inside: impl Fn(f64, f64) -> bool) -> Mask {
        let mut m = Mask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                if inside(x as f64 + 0.5, y as f64 + 0.5) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    #[test]
    fn square_is_rectangle() {
        let m = raster(320, 240, |x, y| (130.0..190.0).contains(&x) && (90.0..150.0).contains(&y));
        let g = detect_goal(&m, &GoalParams::default());
        assert!(g.valid);
        assert_eq!(g.shape, Shape::Rectangle);
        assert_eq!(g.center, [160.0, 120.0]);
        assert_eq!(g.size, 3600.0);
    }

    #[test]
    fn disk_is_circle() {
        let m = raster(320, 240, |x, y| (x - 100.0).hypot(y - 80.0) <= 30.0);
        let g = detect_goal(&m, &GoalParams::default());
        assert_eq!(g.shape, Shape::Circle);
        assert!((g.center[0] - 100.0).abs() <= 0.5 && (g.center[1] - 80.0).abs() <= 0.5);
    }

    #[test]
    fn triangle_is_triangle() {
        let (a, b, c) = ((50.0, 200.0), (150.0, 190.0), (90.0, 100.0));
        let side = |p: (f64, f64), q: (f64, f64), x: f64, y: f64| (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
        let m = raster(320, 240, |x, y| {
            let s = [side(a, b, x, y), side(b, c, x, y), side(c, a, x, y)];
            s.iter().all(|&v| v >= 0.0) || s.iter().all(|&v| v <= 0.0)
        });
        assert_eq!(detect_goal(&m, &GoalParams::default()).shape, Shape::Triangle);
    }

    #[test]
    fn speckle_is_rejected() {
        let mut m = Mask::new(320, 240);
        for i in 0..200 {
            m.set((i * 37) % 320, (i * 53) % 240, true);
        }
        assert_eq!(detect_goal(&m, &GoalParams::default()), GoalDetection::NONE);
    }

    #[test]
    fn ring_outline_is_its_outer_shape() {
        let m = raster(320, 240, |x, y| {
            let r = (x - 160.0).hypot(y - 120.0);
            (40.0..=46.0).contains(&r)
        });
        assert_eq!(detect_goal(&m, &GoalParams::default()).shape, Shape::Circle);
        let m = raster(320, 240, |x, y| {
            let outer = (100.0..200.0).contains(&x) && (60.0..160.0).contains(&y);
            let inner = (106.0..194.0).contains(&x) && (66.0..154.0).contains(&y);
            outer && !inner
        });
        assert_eq!(detect_goal(&m, &GoalParams::default()).shape, Shape::Rectangle);
    }

    #[test]
    fn contour_of_a_block() {
        let m = raster(10, 10, |x, y| (2.0..5.0).contains(&x) && (3.0..5.0).contains(&y));
        let c = trace_contour(&m);
        assert_eq!(c, vec![(2, 3), (3, 3), (4, 3), (4, 4), (3, 4), (2, 4)]);
        let single = raster(5, 5, |x, y| x == 2.5 && y == 2.5);
        assert_eq!(trace_contour(&single), vec![(2, 2)]);
    }

    #[test]
    fn contour_passes_through_a_pinch_twice() {
        // two squares touching at one corner
        let m = raster(12, 12, |x, y| {
            ((1.0..4.0).contains(&x) && (1.0..4.0).contains(&y)) || ((4.0..7.0).contains(&x) && (4.0..7.0).contains(&y))
        });
        let c = trace_contour(&m);
        let unique: std::collections::BTreeSet<_> = c.iter().collect();
        assert_eq!(unique.len(), m.count() - 2);
        // the two pinch pixels are walked through twice
        assert_eq!(c.len(), unique.len() + 2);
    }

    #[test]
    fn diagonal_spur_at_the_start_closes() {
        let mut m = raster(10, 10, |x, y| (2.0..5.0).contains(&x) && (3.0..5.0).contains(&y));
        m.set(1, 2, true);
        let c = trace_contour(&m);
        assert_eq!(c, vec![(1, 2), (2, 3), (3, 3), (4, 3), (4, 4), (3, 4), (2, 4), (2, 3)]);
    }

    proptest::proptest! {
        #[test]
        fn tracing_visits_each_pixel_at_most_four_times(bits in proptest::collection::vec(proptest::bool::weighted(0.6), 64)) {
            let mut m = Mask::new(8, 8);
            for (i, &b) in bits.iter().enumerate() {
                m.set(i % 8, i / 8, b);
            }
            if let Some(blob) = largest_blob(&m, 1) {
                let c = trace_contour(&blob.mask);
                proptest::prop_assert!(!c.is_empty() && c.len() <= 4 * blob.count);
                proptest::prop_assert!(c.iter().all(|&(x, y)| blob.mask.get(x, y)));
            }
        }
    }
}
