//! Batch annotation of episodes over overlapping 2N-frame segments.
//!
//! Dense grid tracking runs once per segment. Each timestep `t >= N` takes its
//! N-step history window from the latest segment that contains `[t - N, t]`.

use rayon::prelude::*;

use crate::overlay::{render_overlay, OverlayStyle};
use crate::rng::{derive_seed, fnv1a64, SplitMix64};
use crate::trace::{filter_active, sample_traces};
use crate::tracker::{track_grid, TrackerConfig, TrackerError};
use crate::types::{validate_episode, ConfigError, Episode, Frame, PointTrajectory, TraceConfig, TraceSet};

/// Frames `[start, end)` tracked together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepAnnotation {
    pub timestep: usize,
    /// Present for every `t >= N`; may hold zero traces when nothing moved.
    pub trace: Option<TraceSet>,
    pub overlaid: Option<Frame>,
    pub dropped: bool,
    pub history_len: usize,
}

impl StepAnnotation {
    pub fn warmup(timestep: usize) -> Self {
        Self {
            timestep,
            trace: None,
            overlaid: None,
            dropped: false,
            history_len: timestep,
        }
    }

    /// Whether the prompt for this step carries the overlay.
    pub fn shows_trace(&self) -> bool {
        !self.dropped && self.trace.as_ref().is_some_and(|t| !t.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedEpisode {
    pub episode_id: String,
    pub steps: Vec<StepAnnotation>,
    pub segments: Vec<Segment>,
}

impl AnnotatedEpisode {
    /// Dense grid tracking invocations used to build this annotation.
    pub fn dense_calls(&self) -> usize {
        self.segments.len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("episode {id} is invalid: {report}")]
    InvalidEpisode { id: String, report: String },
    #[error("episode {0} needs at least 2 frames")]
    TooShort(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid overlay style: {0}")]
    Style(#[from] crate::overlay::StyleError),
    #[error("tracking failed for episode {id}: {source}")]
    Tracker {
        id: String,
        #[source]
        source: TrackerError,
    },
}

pub fn segment_episode(len: usize, window: usize) -> Vec<Segment> {
    let n = window.max(1);
    let mut out = Vec::new();
    let mut k = 0;
    while k == 0 || k * n + n < len {
        out.push(Segment {
            start: k * n,
            end: (k * n + 2 * n).min(len),
        });
        k += 1;
    }
    out
}

/// Index of the latest segment holding the full window `[t - N, t]`.
pub fn segment_for(t: usize, window: usize) -> Option<usize> {
    (t >= window).then(|| t / window - 1)
}

/// Sampling seed for one timestep of one episode.
pub fn step_seed(seed: u64, episode_id: &str, t: usize) -> u64 {
    derive_seed(&[seed, fnv1a64(episode_id.as_bytes()), t as u64])
}

/// Dropout seed for one episode.
pub fn dropout_seed(seed: u64, episode_id: &str) -> u64 {
    derive_seed(&[seed, fnv1a64(episode_id.as_bytes()), 0xD80F])
}

pub fn annotate_episode(
    episode: &Episode,
    trace_cfg: &TraceConfig,
    tracker_cfg: &TrackerConfig,
    style: &OverlayStyle,
) -> Result<AnnotatedEpisode, AnnotateError> {
    trace_cfg.validate()?;
    tracker_cfg.validate()?;
    style.validate()?;
    let report = validate_episode(episode);
    if !report.is_ok() {
        return Err(AnnotateError::InvalidEpisode {
            id: episode.id.clone(),
            report: report.to_string(),
        });
    }
    let len = episode.len();
    if len < 2 {
        return Err(AnnotateError::TooShort(episode.id.clone()));
    }
    let n = trace_cfg.window;
    let segments = segment_episode(len, n);

    let tracks = segments
        .par_iter()
        .map(|s| track_grid(&episode.frames[s.start..s.end], trace_cfg.grid_size, tracker_cfg))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| AnnotateError::Tracker {
            id: episode.id.clone(),
            source,
        })?;

    let steps = (0..len)
        .into_par_iter()
        .map(|t| {
            let Some(si) = segment_for(t, n) else {
                return StepAnnotation::warmup(t);
            };
            window_step(episode, t, segments[si], &tracks[si], trace_cfg, style)
        })
        .collect();

    Ok(AnnotatedEpisode {
        episode_id: episode.id.clone(),
        steps,
        segments,
    })
}

/// Annotates a single timestep exactly as [`annotate_episode`] would, tracking
/// only the segment that timestep draws from.
pub fn annotate_step(
    episode: &Episode,
    t: usize,
    trace_cfg: &TraceConfig,
    tracker_cfg: &TrackerConfig,
    style: &OverlayStyle,
) -> Result<StepAnnotation, AnnotateError> {
    trace_cfg.validate()?;
    tracker_cfg.validate()?;
    style.validate()?;
    let n = trace_cfg.window;
    let Some(si) = segment_for(t, n).filter(|_| t < episode.len()) else {
        return Ok(StepAnnotation::warmup(t.min(episode.len())));
    };
    let seg = segment_episode(episode.len(), n)[si];
    let track = track_grid(&episode.frames[seg.start..seg.end], trace_cfg.grid_size, tracker_cfg).map_err(
        |source| AnnotateError::Tracker {
            id: episode.id.clone(),
            source,
        },
    )?;
    Ok(window_step(episode, t, seg, &track, trace_cfg, style))
}

fn window_step(
    episode: &Episode,
    t: usize,
    seg: Segment,
    track: &[PointTrajectory],
    trace_cfg: &TraceConfig,
    style: &OverlayStyle,
) -> StepAnnotation {
    let n = trace_cfg.window;
    debug_assert!(seg.start + n <= t && seg.contains(t));
    let (a, b) = (t - n - seg.start, t - seg.start);
    let windowed: Vec<_> = track.iter().map(|tr| tr.slice(a, b)).collect();
    let active = filter_active(&windowed, trace_cfg.kappa);
    let set = sample_traces(
        &active,
        trace_cfg.sample_count,
        step_seed(trace_cfg.seed, &episode.id, t),
        t - n,
        t,
    );
    let overlaid = render_overlay(&episode.frames[t], &set, style);
    StepAnnotation {
        timestep: t,
        trace: Some(set),
        overlaid: Some(overlaid),
        dropped: false,
        history_len: n,
    }
}

/// Marks each step dropped with probability `dropout_prob`, independently
/// per timestep.
pub fn apply_dropout(annotations: &[StepAnnotation], dropout_prob: f64, seed: u64) -> Vec<StepAnnotation> {
    annotations
        .iter()
        .map(|a| {
            let mut rng = SplitMix64::new(derive_seed(&[seed, a.timestep as u64]));
            StepAnnotation {
                dropped: rng.next_f64() < dropout_prob,
                ..a.clone()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use crate::tracker::track_points;
    use crate::types::Point;

    fn seg(start: usize, end: usize) -> Segment {
        Segment { start, end }
    }

    #[test]
    fn segment_examples() {
        assert_eq!(segment_episode(24, 6), vec![seg(0, 12), seg(6, 18), seg(12, 24)]);
        assert_eq!(segment_episode(12, 6), vec![seg(0, 12)]);
        assert_eq!(segment_episode(10, 6), vec![seg(0, 10)]);
        assert_eq!(segment_episode(2, 6), vec![seg(0, 2)]);
        assert_eq!(segment_episode(13, 6), vec![seg(0, 12), seg(6, 13)]);
    }

    #[test]
    fn latest_segment_is_chosen() {
        let segs = segment_episode(24, 6);
        assert_eq!(segment_for(5, 6), None);
        assert_eq!(segment_for(6, 6), Some(0));
        assert_eq!(segment_for(12, 6), Some(1));
        assert_eq!(segment_for(23, 6), Some(2));
        for t in 6..24 {
            let s = segs[segment_for(t, 6).unwrap()];
            assert!(s.start + 6 <= t && t < s.end);
            assert!(segs.iter().all(|o| !(o.start + 6 <= t && t < o.end) || o.start <= s.start));
        }
    }

    fn small_cfg() -> (TraceConfig, TrackerConfig) {
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
    fn static_episode_has_empty_traces() {
        let f = synth::noise_frame(64, 64, 3, 0);
        let ep = Episode {
            id: "static".into(),
            instruction: "wait".into(),
            frames: (0..24).map(|i| f.clone().with_index(i)).collect(),
            actions: vec![vec![0.0; 7]; 24],
        };
        let (tc, kc) = small_cfg();
        let ann = annotate_episode(&ep, &tc, &kc, &OverlayStyle::default()).unwrap();
        assert_eq!(ann.steps.len(), 24);
        assert_eq!(ann.dense_calls(), 3);
        for s in &ann.steps {
            if s.timestep < 6 {
                assert!(s.trace.is_none() && s.overlaid.is_none());
                assert_eq!(s.history_len, s.timestep);
            } else {
                assert!(s.trace.as_ref().unwrap().is_empty());
                assert_eq!(s.overlaid.as_ref().unwrap(), &ep.frames[s.timestep]);
                assert!(!s.shows_trace());
            }
        }
    }

    #[test]
    fn windows_match_direct_tracking() {
        let frames = synth::panning_sequence(96, 96, 20, (1, 1), 17);
        let ep = Episode {
            id: "pan".into(),
            instruction: "follow".into(),
            actions: vec![vec![0.0; 7]; frames.len()],
            frames,
        };
        let (tc, kc) = small_cfg();
        let ann = annotate_episode(&ep, &tc, &kc, &OverlayStyle::default()).unwrap();
        let step = &ann.steps[12];
        let set = step.trace.as_ref().unwrap();
        assert_eq!((set.window_start, set.window_end), (6, 12));
        assert!(!set.is_empty());
        let queries: Vec<Point> = set.traces.iter().map(|t| t.first()).collect();
        let direct = track_points(&ep.frames[6..=12], &queries, &kc).unwrap();
        for (a, b) in set.traces.iter().zip(&direct) {
            for (p, q) in a.points.iter().zip(&b.points) {
                assert!(p.dist(*q) <= 0.25, "{p:?} vs {q:?}");
            }
        }
        assert_eq!(ann.steps[3].trace, None);
        assert_eq!(ann.steps[3].history_len, 3);
    }

    #[test]
    fn annotation_is_deterministic() {
        let ep = synth::moving_patch_episode("det", 64, 64, 14, 5);
        let (tc, kc) = small_cfg();
        let a = annotate_episode(&ep, &tc, &kc, &OverlayStyle::default()).unwrap();
        let b = annotate_episode(&ep, &tc, &kc, &OverlayStyle::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_extremes() {
        let steps: Vec<_> = (0..500).map(StepAnnotation::warmup).collect();
        assert!(apply_dropout(&steps, 0.0, 1).iter().all(|s| !s.dropped));
        assert!(apply_dropout(&steps, 1.0, 1).iter().all(|s| s.dropped));
        assert!(steps.iter().all(|s| !s.dropped));
    }

    #[test]
    fn dropout_rate() {
        let steps: Vec<_> = (0..100_000).map(StepAnnotation::warmup).collect();
        let dropped = apply_dropout(&steps, 0.1, 2024).iter().filter(|s| s.dropped).count();
        let frac = dropped as f64 / 1e5;
        assert!((0.094..=0.106).contains(&frac), "{frac}");
    }

    #[test]
    fn invalid_episode_rejected() {
        let mut ep = synth::moving_patch_episode("bad", 64, 64, 8, 1);
        ep.actions.pop();
        let (tc, kc) = small_cfg();
        assert!(matches!(
            annotate_episode(&ep, &tc, &kc, &OverlayStyle::default()),
            Err(AnnotateError::InvalidEpisode { .. })
        ));
    }
}
