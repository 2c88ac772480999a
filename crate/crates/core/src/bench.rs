//! Per-step cost measurements for the streaming tracker and dense grid
//! tracking, used by the `bench` command and the acceptance suite.

use std::time::Instant;

use serde::Serialize;

use crate::stream::StreamState;
use crate::synth;
use crate::tracker::{track_grid, TrackerConfig};
use crate::types::TraceConfig;
use crate::OverlayStyle;

/// Soft budget for one sparse streaming step.
pub const SPARSE_STEP_BUDGET_MS: f64 = 30.0;
/// Soft budget for dense 40x40 tracking over 7 frames.
pub const DENSE_WINDOW_BUDGET_MS: f64 = 600.0;
/// Hard ceilings are this multiple of the soft budgets.
pub const HARD_CEILING_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub frame_size: usize,
    pub sparse_step_median_ms: f64,
    pub sparse_samples: usize,
    pub dense_window_median_ms: f64,
    pub dense_samples: usize,
    pub dense_amortized_ms: f64,
    pub redraw_steps: usize,
}

impl BenchReport {
    pub fn sparse_within_soft(&self) -> bool {
        self.sparse_step_median_ms <= SPARSE_STEP_BUDGET_MS
    }

    pub fn dense_within_soft(&self) -> bool {
        self.dense_window_median_ms <= DENSE_WINDOW_BUDGET_MS
    }

    pub fn within_hard_ceiling(&self) -> bool {
        self.sparse_step_median_ms <= SPARSE_STEP_BUDGET_MS * HARD_CEILING_FACTOR
            && self.dense_window_median_ms <= DENSE_WINDOW_BUDGET_MS * HARD_CEILING_FACTOR
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Runs `dense_runs` dense windows and a stream long enough for
/// `sparse_steps` sparse steps, on 256x256 synthetic frames.
pub fn run(sparse_steps: usize, dense_runs: usize) -> BenchReport {
    let size = 256;
    let trace_cfg = TraceConfig::default();
    let tracker_cfg = TrackerConfig::default();
    let n = trace_cfg.window;

    let frames = synth::panning_sequence(size, size, n + 1, (1, 1), 77);
    let dense: Vec<f64> = (0..dense_runs.max(1))
        .map(|_| {
            let start = Instant::now();
            let trajs = track_grid(&frames, trace_cfg.grid_size, &tracker_cfg).expect("valid synthetic input");
            let ms = start.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(trajs);
            ms
        })
        .collect();

    // Only one dense recalibration happens within the measured stream.
    let stream_cfg = TraceConfig {
        redraw_steps: sparse_steps + n + 1,
        ..trace_cfg.clone()
    };
    let total = n + 1 + sparse_steps.max(1);
    let feed = synth::panning_sequence(size, size, total, (1, 0), 78);
    let mut state =
        StreamState::new(stream_cfg, tracker_cfg, OverlayStyle::default()).expect("default configuration is valid");
    let mut sparse = Vec::new();
    for frame in feed {
        let start = Instant::now();
        let out = state.step(frame).expect("valid synthetic feed");
        let ms = start.elapsed().as_secs_f64() * 1e3;
        if state.t() > n + 1 && !out.dense {
            sparse.push(ms);
        }
    }

    let dense_median = median(dense.clone());
    BenchReport {
        frame_size: size,
        sparse_samples: sparse.len(),
        sparse_step_median_ms: median(sparse),
        dense_samples: dense.len(),
        dense_window_median_ms: dense_median,
        dense_amortized_ms: dense_median / trace_cfg.redraw_steps as f64,
        redraw_steps: trace_cfg.redraw_steps,
    }
}
