use std::fmt::Write as _;

use crate::types::TraceSet;

fn quantize(v: f64, precision: u32) -> i64 {
    let step = precision.max(1) as f64;
    ((v / step).round() * step) as i64
}

/// Describes each trace as text, one line per trace:
/// `point {i}: (x0, y0) -> (x1, y1) -> ...`, with coordinates rounded to
/// multiples of `precision` pixels.
pub fn format_text_trace(traces: &TraceSet, precision: u32) -> String {
    let mut out = String::new();
    for (i, trace) in traces.traces.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "point {i}: ");
        for (k, p) in trace.points.iter().enumerate() {
            if k > 0 {
                out.push_str(" -> ");
            }
            let _ = write!(out, "({}, {})", quantize(p.x, precision), quantize(p.y, precision));
        }
    }
    out
}
