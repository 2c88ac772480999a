//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Exposes three operations: rendering trace overlays over a synthetic
//! episode, fitting quantile action bins, and listing the segment schedule
//! used for offline annotation.

use serde_json::json;
use vtrace::actions::fit_bins;
use vtrace::annotate::{annotate_step, segment_episode, segment_for};
use vtrace::synth::moving_patch_episode;
use vtrace::{Episode, OverlayStyle, TraceConfig, TrackerConfig};
use wasm_bindgen::prelude::*;

/// A synthetic episode the page scrubs through.
#[wasm_bindgen]
pub struct Demo {
    episode: Episode,
    last_trace: String,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: usize, frames: usize) -> Demo {
        let size = size.clamp(64, 320);
        let frames = frames.clamp(8, 120);
        Demo {
            episode: moving_patch_episode("demo", size, size, frames, seed as u64),
            last_trace: "null".into(),
        }
    }

    pub fn width(&self) -> usize {
        self.episode.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.episode.frames[0].height()
    }

    pub fn frames(&self) -> usize {
        self.episode.len()
    }

    /// RGBA pixels of timestep `t` with its trace overlay, or the raw frame
    /// while the history window is still filling. Errors come back as text.
    pub fn render(&mut self, t: usize, grid: usize, samples: usize, kappa: f64, linewidth: f64) -> Result<Vec<u8>, String> {
        let t = t.min(self.episode.len() - 1);
        let trace_cfg = TraceConfig {
            grid_size: grid,
            sample_count: samples,
            kappa,
            ..TraceConfig::default()
        };
        let style = OverlayStyle {
            linewidth,
            ..OverlayStyle::default()
        };
        let step = annotate_step(&self.episode, t, &trace_cfg, &TrackerConfig::default(), &style)
            .map_err(|e| e.to_string())?;
        self.last_trace = serde_json::to_string(&step.trace).expect("trace serializes");
        let frame = step.overlaid.as_ref().unwrap_or(&self.episode.frames[t]);
        Ok(to_rgba(frame.pixels()))
    }

    /// JSON of the trace drawn by the last `render` call (`null` during warm-up).
    pub fn last_trace(&self) -> String {
        self.last_trace.clone()
    }
}

fn to_rgba(rgb: &[u8]) -> Vec<u8> {
    rgb.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// Fits `n_bins` quantile bins to `values` and reports each value's token
/// and decoded value as JSON.
#[wasm_bindgen]
pub fn quantize(values: Vec<f64>, n_bins: usize) -> Result<String, String> {
    let table = fit_bins(std::slice::from_ref(&values), n_bins).map_err(|e| e.to_string())?;
    let rows: Vec<_> = values
        .iter()
        .map(|&v| {
            let token = table.encode_value(0, v);
            let decoded = table.decode(&[token]).map_err(|e| e.to_string())?[0];
            Ok(json!({"value": v, "token": token, "decoded": decoded}))
        })
        .collect::<Result<_, String>>()?;
    Ok(json!({
        "boundaries": table.boundaries[0],
        "min": table.data_min[0],
        "max": table.data_max[0],
        "rows": rows,
    })
    .to_string())
}

/// Segment schedule for an episode of `len` frames and history `window`,
/// with the segment each timestep draws its trace from.
#[wasm_bindgen]
pub fn schedule(len: usize, window: usize) -> Result<String, String> {
    if window == 0 {
        return Err("window must be positive".into());
    }
    let segments: Vec<_> = segment_episode(len, window)
        .iter()
        .map(|s| json!({"start": s.start, "end": s.end}))
        .collect();
    let steps: Vec<_> = (0..len).map(|t| segment_for(t, window)).collect();
    Ok(json!({"segments": segments, "step_segment": steps}).to_string())
}
