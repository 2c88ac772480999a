//! Visual trace prompting data machinery for robot demonstrations.
//!
//! The pipeline tracks a dense grid of points through episode frames,
//! keeps trajectories that moved, samples a handful, draws them over the
//! current observation and assembles dual-image prompt records alongside
//! quantile-binned action tokens. [`stream`] provides the same traces online
//! with periodic dense recalibration.

pub mod actions;
pub mod annotate;
pub mod bench;
#[cfg(feature = "cli")]
pub mod cli;
pub mod overlay;
pub mod promptio;
pub mod rng;
pub mod stream;
pub mod synth;
pub mod trace;
pub mod tracker;
pub mod types;

pub use actions::{decode_tokens, encode_action, fit_bins, BinTable};
pub use annotate::{annotate_episode, apply_dropout, segment_episode, AnnotatedEpisode, Segment, StepAnnotation};
pub use overlay::{palette_color, render_overlay, OverlayStyle};
pub use stream::{stream_init, stream_step, StreamState};
pub use trace::{filter_active, sample_traces, trajectory_movement, ActiveSet};
pub use tracker::{oracle_track_point, track_grid, track_point, track_points, TrackStatus, TrackerConfig};
pub use types::{validate_episode, Episode, Frame, Point, PointTrajectory, TraceConfig, TraceSet};
