//! Online trace extraction for inference.
//!
//! Keeps the last N+1 frames. Dense grid tracking runs at `t == N` and every
//! `redraw_steps` after that; in between only the sampled points are
//! re-tracked over the queued frames.

use std::collections::VecDeque;

use crate::overlay::{render_overlay, OverlayStyle, StyleError};
use crate::rng::derive_seed;
use crate::trace::{filter_active, sample_traces};
use crate::tracker::{build_pyramid, grid_queries, track_points_on_pyramids, Pyramid, TrackerConfig, TrackerError};
use crate::types::{ConfigError, Frame, Point, TraceConfig, TraceSet};

#[derive(Debug, thiserror::Error)]
pub enum StreamError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Style(#[from] StyleError),
    #[error("frame at step {t} is {actual:?}, stream frames are {expected:?}")]
    FrameSize {
        t: usize,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

/// What one step produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOutput {
    pub trace: Option<TraceSet>,
    pub overlaid: Option<Frame>,
    /// Whether this step ran dense grid tracking.
    pub dense: bool,
}

#[derive(Debug, Clone)]
pub struct StreamState {
    t: usize,
    frames: VecDeque<Frame>,
    pyramids: VecDeque<Pyramid>,
    current: Option<TraceSet>,
    trace_cfg: TraceConfig,
    tracker_cfg: TrackerConfig,
    style: OverlayStyle,
    last_dense_at: Option<usize>,
    dense_calls: usize,
}

/// Sampling seed for a dense recalibration at step `t`.
pub fn recalibration_seed(seed: u64, t: usize) -> u64 {
    derive_seed(&[seed, t as u64])
}

/// True when step `t` runs dense grid tracking.
pub fn is_recalibration_step(t: usize, window: usize, redraw_steps: usize) -> bool {
    t >= window && (t - window).is_multiple_of(redraw_steps)
}

pub fn stream_init(trace_cfg: TraceConfig, tracker_cfg: TrackerConfig) -> Result<StreamState, StreamError> {
    StreamState::new(trace_cfg, tracker_cfg, OverlayStyle::default())
}

impl StreamState {
    pub fn new(trace_cfg: TraceConfig, tracker_cfg: TrackerConfig, style: OverlayStyle) -> Result<Self, StreamError> {
        trace_cfg.validate()?;
        tracker_cfg.validate()?;
        style.validate()?;
        Ok(Self {
            t: 0,
            frames: VecDeque::with_capacity(trace_cfg.window + 1),
            pyramids: VecDeque::with_capacity(trace_cfg.window + 1),
            current: None,
            trace_cfg,
            tracker_cfg,
            style,
            last_dense_at: None,
            dense_calls: 0,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn queue_len(&self) -> usize {
        self.frames.len()
    }

    pub fn last_dense_at(&self) -> Option<usize> {
        self.last_dense_at
    }

    pub fn dense_calls(&self) -> usize {
        self.dense_calls
    }

    /// The traces currently being followed, over the queued window.
    pub fn current_trace(&self) -> Option<&TraceSet> {
        self.current.as_ref()
    }

    /// Latest positions of the tracked points.
    pub fn tracked_points(&self) -> Option<Vec<Point>> {
        self.current.as_ref().map(|s| s.traces.iter().map(|t| t.last()).collect())
    }

    pub fn step(&mut self, frame: Frame) -> Result<StepOutput, StreamError> {
        let t = self.t;
        let n = self.trace_cfg.window;
        if let Some(first) = self.frames.front() {
            let expected = (first.width(), first.height());
            let actual = (frame.width(), frame.height());
            if expected != actual {
                return Err(StreamError::FrameSize { t, expected, actual });
            }
        }
        let pyramid = build_pyramid(&frame, &self.tracker_cfg)?;
        self.frames.push_back(frame);
        self.pyramids.push_back(pyramid);
        while self.frames.len() > n + 1 {
            self.frames.pop_front();
            self.pyramids.pop_front();
        }
        self.t += 1;

        if t < n {
            return Ok(StepOutput::default());
        }

        let window_start = t + 1 - self.frames.len();
        let pyramids = self.pyramids.make_contiguous();
        let dense = is_recalibration_step(t, n, self.trace_cfg.redraw_steps);

        let next = if dense {
            self.dense_calls += 1;
            self.last_dense_at = Some(t);
            let base = &self.frames[0];
            let grid = grid_queries(base.width(), base.height(), self.trace_cfg.grid_size);
            let trajs = track_points_on_pyramids(pyramids, &grid, &self.tracker_cfg)?;
            let active = filter_active(&trajs, self.trace_cfg.kappa);
            let set = sample_traces(
                &active,
                self.trace_cfg.sample_count,
                recalibration_seed(self.trace_cfg.seed, t),
                window_start,
                t,
            );
            (!set.is_empty()).then_some(set)
        } else if let Some(prev) = self.current.take() {
            // Each trace's second position is where it sat on the new first frame.
            let queries: Vec<Point> = prev.traces.iter().map(|tr| tr.points[1]).collect();
            let trajs = track_points_on_pyramids(pyramids, &queries, &self.tracker_cfg)?;
            let traces: Vec<_> = trajs
                .into_iter()
                .zip(&prev.traces)
                .filter(|(tr, _)| tr.all_valid())
                .map(|(mut tr, old)| {
                    tr.origin = old.origin;
                    tr
                })
                .collect();
            (!traces.is_empty()).then_some(TraceSet {
                traces,
                window_start,
                window_end: t,
            })
        } else {
            None
        };

        self.current = next;
        Ok(match &self.current {
            Some(set) => StepOutput {
                trace: Some(set.clone()),
                overlaid: Some(render_overlay(self.frames.back().expect("just pushed"), set, &self.style)),
                dense,
            },
            None => StepOutput {
                dense,
                ..StepOutput::default()
            },
        })
    }
}

pub fn stream_step(state: &mut StreamState, frame: Frame) -> Result<StepOutput, StreamError> {
    state.step(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn cfgs() -> (TraceConfig, TrackerConfig) {
        (
            TraceConfig {
                grid_size: 8,
                ..TraceConfig::default()
            },
            TrackerConfig {
                pyramid_levels: 2,
                ..TrackerConfig::default()
            },
        )
    }

    #[test]
    fn init_state() {
        let s = stream_init(TraceConfig::default(), TrackerConfig::default()).unwrap();
        assert_eq!(s.t(), 0);
        assert_eq!(s.queue_len(), 0);
        assert!(s.current_trace().is_none());
        assert!(s.tracked_points().is_none());
    }

    #[test]
    fn rejects_oversampling() {
        let tc = TraceConfig {
            grid_size: 2,
            sample_count: 5,
            ..TraceConfig::default()
        };
        assert!(matches!(
            stream_init(tc, TrackerConfig::default()),
            Err(StreamError::Config(_))
        ));
    }

    #[test]
    fn warmup_and_static_feed() {
        let (tc, kc) = cfgs();
        let mut s = stream_init(tc, kc).unwrap();
        let f = synth::noise_frame(64, 64, 1, 0);
        for t in 0..30 {
            let out = s.step(f.clone().with_index(t)).unwrap();
            assert!(out.trace.is_none() && out.overlaid.is_none());
            assert!(s.queue_len() <= 7);
        }
        assert_eq!(s.dense_calls(), 2);
        assert_eq!(s.last_dense_at(), Some(26));
    }

    #[test]
    fn frame_size_mismatch() {
        let (tc, kc) = cfgs();
        let mut s = stream_init(tc, kc).unwrap();
        s.step(synth::noise_frame(64, 64, 1, 0)).unwrap();
        assert!(matches!(
            s.step(synth::noise_frame(64, 48, 1, 1)),
            Err(StreamError::FrameSize { .. })
        ));
    }

    #[test]
    fn moving_feed_keeps_identities_between_recalibrations() {
        let (tc, kc) = cfgs();
        let mut s = stream_init(tc, kc).unwrap();
        let frames = synth::panning_sequence(96, 96, 20, (1, 0), 4);
        let mut ids = None;
        for (t, f) in frames.into_iter().enumerate() {
            let out = s.step(f).unwrap();
            if t < 6 {
                assert!(out.trace.is_none());
                continue;
            }
            let set = out.trace.expect("motion present");
            assert_eq!(set.window_end, t);
            assert_eq!(set.window_start, t - 6);
            assert!(set.traces.iter().all(|tr| tr.len() == 7 && tr.all_valid()));
            let now: Vec<usize> = set.traces.iter().map(|t| t.origin).collect();
            if t == 6 {
                ids = Some(now);
            } else if let Some(prev) = &ids {
                assert!(now.iter().all(|o| prev.contains(o)));
            }
        }
        assert_eq!(s.dense_calls(), 1);
    }
}
