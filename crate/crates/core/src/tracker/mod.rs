//! Deterministic pyramidal Lucas-Kanade point tracking, plus an exhaustive
//! block-matching oracle used to check it.

mod lk;
mod oracle;
mod pyramid;

use serde::{Deserialize, Serialize};

pub use lk::{build_pyramids, grid_queries, track_grid, track_point, track_points, track_points_on_pyramids};
pub use oracle::oracle_track_point;
pub use pyramid::{build_pyramid, check_fits, pyramid_dims, GrayImage, Level, Pyramid};

use crate::types::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Number of downsampled levels; a pyramid holds `pyramid_levels + 1` images.
    pub pyramid_levels: usize,
    /// The tracking window is `(2 * window_half + 1)` pixels square.
    pub window_half: usize,
    pub max_iters: usize,
    /// Convergence threshold on the per-iteration update norm, in pixels.
    pub epsilon: f64,
    /// Minimum smaller eigenvalue of the per-pixel structure matrix.
    pub min_eigen: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            window_half: 5,
            max_iters: 30,
            epsilon: 0.01,
            min_eigen: 1e-4,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Tracker(m.to_owned()));
        if self.window_half < 2 {
            return bad("window_half must be at least 2");
        }
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.min_eigen >= 0.0) {
            return bad("min_eigen must be non-negative");
        }
        Ok(())
    }

    pub fn window_pixels(&self) -> usize {
        let side = 2 * self.window_half + 1;
        side * side
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackStatus {
    Tracked,
    /// The structure matrix was too weak to localize the point.
    Lost,
    /// The tracking window left the image.
    OutOfBounds,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("window too short: need at least 2 frames, got {0}")]
    WindowTooShort(usize),
    #[error("{width}x{height} frame cannot hold a {window}px window after {levels} pyramid levels")]
    PyramidTooDeep {
        width: usize,
        height: usize,
        levels: usize,
        window: usize,
    },
    #[error("frame {index} is {actual:?}, expected {expected:?}")]
    FrameSizeMismatch {
        index: usize,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("query {index} at ({x}, {y}) lies outside the frame")]
    QueryOutOfFrame { index: usize, x: f64, y: f64 },
    #[error("oracle window at ({x}, {y}) with search radius {radius} does not fit the frame")]
    OracleWindow { x: i64, y: i64, radius: usize },
}
