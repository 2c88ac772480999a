//! Shared domain types: frames, episodes, trajectories, trace sets and the
//! pipeline configuration, plus episode validation.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Smallest frame side accepted anywhere in the pipeline.
pub const MIN_FRAME_SIDE: usize = 32;

/// Default action dimension: 6-DoF end-effector delta plus gripper.
pub const DEFAULT_ACTION_DIM: usize = 7;

/// An 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    /// Timestep ordinal within the owning episode.
    pub index: usize,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("index", &self.index)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("pixel buffer holds {actual} bytes, expected {expected} for {width}x{height} RGB")]
    BufferSize {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("frame {width}x{height} is smaller than the {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE} minimum")]
    TooSmall { width: usize, height: usize },
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, index: usize) -> Result<Self, FrameError> {
        let expected = width * height * 3;
        if pixels.len() != expected {
            return Err(FrameError::BufferSize {
                width,
                height,
                expected,
                actual: pixels.len(),
            });
        }
        if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
            return Err(FrameError::TooSmall { width, height });
        }
        Ok(Self {
            width,
            height,
            pixels,
            index,
        })
    }

    /// Builds a frame without the minimum-size check. Only the buffer length
    /// is enforced; `validate_episode` reports undersized frames.
    pub fn new_unchecked_size(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        index: usize,
    ) -> Result<Self, FrameError> {
        let expected = width * height * 3;
        if pixels.len() != expected {
            return Err(FrameError::BufferSize {
                width,
                height,
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            index,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3], index: usize) -> Result<Self, FrameError> {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, pixels, index)
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }
}

/// A sub-pixel image position.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn l1(self, other: Point) -> f64 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// One demonstration: frames, per-step actions and the instruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: String,
    pub instruction: String,
    pub frames: Vec<Frame>,
    pub actions: Vec<Vec<f64>>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn action_dim(&self) -> Option<usize> {
        self.actions.first().map(Vec::len)
    }
}

/// A single point's path through a window of frames.
///
/// Positions flagged invalid hold the last valid position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointTrajectory {
    pub points: Vec<Point>,
    pub valid: Vec<bool>,
    /// Grid cell (row-major) or query index this trajectory was seeded from.
    pub origin: usize,
}

impl PointTrajectory {
    pub fn stationary(origin: usize, p: Point, len: usize) -> Self {
        Self {
            points: vec![p; len],
            valid: vec![true; len],
            origin,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    pub fn first(&self) -> Point {
        self.points[0]
    }

    pub fn last(&self) -> Point {
        *self.points.last().expect("trajectory is non-empty")
    }

    /// Sub-window `[start, end]` (inclusive) as a new trajectory.
    pub fn slice(&self, start: usize, end: usize) -> PointTrajectory {
        PointTrajectory {
            points: self.points[start..=end].to_vec(),
            valid: self.valid[start..=end].to_vec(),
            origin: self.origin,
        }
    }
}

/// The sampled active trajectories used for one visual prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub traces: Vec<PointTrajectory>,
    /// First timestep of the window (inclusive).
    pub window_start: usize,
    /// Last timestep of the window (inclusive).
    pub window_end: usize,
}

impl TraceSet {
    pub fn empty(window_start: usize, window_end: usize) -> Self {
        Self {
            traces: Vec::new(),
            window_start,
            window_end,
        }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

/// Visual trace pipeline parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    /// Grid points per side for dense tracking.
    pub grid_size: usize,
    /// Active trajectories sampled per prompt.
    pub sample_count: usize,
    /// History window in timesteps.
    pub window: usize,
    /// Total L1 movement (pixels) a trajectory must strictly exceed to be active.
    pub kappa: f64,
    pub dropout_prob: f64,
    /// Streaming steps between dense recalibrations.
    pub redraw_steps: usize,
    pub seed: u64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            grid_size: 40,
            sample_count: 5,
            window: 6,
            kappa: 2.0,
            dropout_prob: 0.1,
            redraw_steps: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid trace configuration: {0}")]
    Trace(String),
    #[error("invalid tracker configuration: {0}")]
    Tracker(String),
}

impl TraceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Trace(m.to_owned()));
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2");
        }
        if self.sample_count < 1 {
            return bad("sample_count must be at least 1");
        }
        if self.window < 1 {
            return bad("window must be at least 1");
        }
        if !(self.kappa >= 0.0) {
            return bad("kappa must be non-negative");
        }
        if self.redraw_steps < 1 {
            return bad("redraw_steps must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return bad("dropout_prob must lie in [0, 1]");
        }
        if self.sample_count > self.grid_size * self.grid_size {
            return bad("sample_count exceeds grid_size squared");
        }
        Ok(())
    }
}

/// A single episode invariant violation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoFrames,
    FrameSizeMismatch {
        index: usize,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    UndersizedFrame {
        index: usize,
        size: (usize, usize),
    },
    ActionFrameLengthMismatch {
        frames: usize,
        actions: usize,
    },
    ActionDimMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    BufferSize {
        index: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoFrames => write!(f, "episode has no frames"),
            Violation::FrameSizeMismatch {
                index,
                expected,
                actual,
            } => write!(
                f,
                "frame size mismatch: frame {index} is {}x{}, expected {}x{}",
                actual.0, actual.1, expected.0, expected.1
            ),
            Violation::UndersizedFrame { index, size } => {
                write!(f, "undersized frame: frame {index} is {}x{}", size.0, size.1)
            }
            Violation::ActionFrameLengthMismatch { frames, actions } => write!(
                f,
                "action/frame length mismatch: {frames} frames, {actions} actions"
            ),
            Violation::ActionDimMismatch {
                index,
                expected,
                actual,
            } => write!(
                f,
                "action dimension mismatch: action {index} has {actual} values, expected {expected}"
            ),
            Violation::BufferSize { index } => write!(f, "frame {index} pixel buffer has wrong length"),
        }
    }
}

/// Result of [`validate_episode`]; empty means the episode is well-formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "OK");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

pub fn validate_episode(episode: &Episode) -> ValidationReport {
    let mut violations = Vec::new();
    let Some(first) = episode.frames.first() else {
        violations.push(Violation::NoFrames);
        return ValidationReport { violations };
    };
    let expected = (first.width(), first.height());
    for (index, frame) in episode.frames.iter().enumerate() {
        let size = (frame.width(), frame.height());
        if frame.pixels().len() != size.0 * size.1 * 3 {
            violations.push(Violation::BufferSize { index });
        }
        if size != expected {
            violations.push(Violation::FrameSizeMismatch {
                index,
                expected,
                actual: size,
            });
        }
        if size.0 < MIN_FRAME_SIDE || size.1 < MIN_FRAME_SIDE {
            violations.push(Violation::UndersizedFrame { index, size });
        }
    }
    if episode.actions.len() != episode.frames.len() {
        violations.push(Violation::ActionFrameLengthMismatch {
            frames: episode.frames.len(),
            actions: episode.actions.len(),
        });
    }
    if let Some(dim) = episode.action_dim() {
        for (index, action) in episode.actions.iter().enumerate() {
            if action.len() != dim {
                violations.push(Violation::ActionDimMismatch {
                    index,
                    expected: dim,
                    actual: action.len(),
                });
            }
        }
    }
    ValidationReport { violations }
}
