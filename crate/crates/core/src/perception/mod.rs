//! Balloon and goal detection on camera frames.
//!
//! Balloons: each 16x16 cell's mean chroma is tested against a trained color
//! family, the activations are fused over time by a log-odds filter, and the
//! largest 4-connected cluster of confident cells is the detection.
//!
//! Goals: a binary mask (from a color family or from an IR on/off frame pair)
//! is reduced to its largest blob, whose outline is simplified to a polygon;
//! only triangles, rectangles and circles survive.

pub mod color;
pub mod frame;
pub mod goal;
pub mod grid;

pub use color::{mahalanobis, rgb_to_lab, train_color_family, ColorFamily};
pub use frame::{diff_frames, Frame, GrayFrame, Mask, FRAME_HEIGHT, FRAME_WIDTH};
pub use goal::{detect_goal, GoalDetection, GoalParams, Shape};
pub use grid::{activate_cells, largest_cluster, Detection, FilterParams, LogOddsGrid};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PerceptionError {
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("covariance is not positive definite")]
    SingularCovariance,
    #[error("frame dimensions do not match")]
    DimensionMismatch,
}
