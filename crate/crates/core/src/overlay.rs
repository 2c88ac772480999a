//! Trace overlay rendering.
//!
//! Polylines are rasterized by stamping filled discs every half pixel along
//! each segment. Vertices are snapped to the half-pixel grid first, so the
//! output is byte-exact across platforms. Pixel `(i, j)` is treated as the
//! point `(i, j)` when testing disc coverage.

use serde::{Deserialize, Serialize};

use crate::types::{Frame, Point, TraceSet};

pub type Rgb = [u8; 3];

pub const RED: Rgb = [255, 0, 0];
pub const YELLOW: Rgb = [255, 255, 0];
pub const PURPLE: Rgb = [160, 32, 240];
pub const BLUE: Rgb = [0, 0, 255];
pub const GREEN: Rgb = [0, 200, 0];

/// Red, yellow, purple, blue, green.
pub const DEFAULT_PALETTE: [Rgb; 5] = [RED, YELLOW, PURPLE, BLUE, GREEN];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlayStyle {
    pub linewidth: f64,
    pub alpha: f64,
    pub palette: Vec<Rgb>,
    pub endpoint_radius: f64,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            linewidth: 2.0,
            alpha: 1.0,
            palette: DEFAULT_PALETTE.to_vec(),
            endpoint_radius: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StyleError {
    #[error("linewidth must be at least 1, got {0}")]
    Linewidth(f64),
    #[error("alpha must lie in [0, 1], got {0}")]
    Alpha(f64),
    #[error("palette is empty")]
    EmptyPalette,
    #[error("endpoint radius must be non-negative, got {0}")]
    EndpointRadius(f64),
}

impl OverlayStyle {
    pub fn validate(&self) -> Result<(), StyleError> {
        if !(self.linewidth >= 1.0) {
            return Err(StyleError::Linewidth(self.linewidth));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(StyleError::Alpha(self.alpha));
        }
        if self.palette.is_empty() {
            return Err(StyleError::EmptyPalette);
        }
        if !(self.endpoint_radius >= 0.0) {
            return Err(StyleError::EndpointRadius(self.endpoint_radius));
        }
        Ok(())
    }

    /// Distance beyond which no pixel is touched by a trace.
    pub fn reach(&self) -> f64 {
        (self.linewidth / 2.0).max(self.endpoint_radius)
    }
}

pub fn palette_color(index: usize, palette: &[Rgb]) -> Rgb {
    palette[index % palette.len()]
}

fn snap_half(p: Point) -> Point {
    Point::new((p.x * 2.0).round() / 2.0, (p.y * 2.0).round() / 2.0)
}

struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    fn disc(&mut self, c: Point, radius: f64) {
        let r2 = radius * radius;
        let x0 = (c.x - radius).ceil().max(0.0) as i64;
        let y0 = (c.y - radius).ceil().max(0.0) as i64;
        let x1 = ((c.x + radius).floor() as i64).min(self.width as i64 - 1);
        let y1 = ((c.y + radius).floor() as i64).min(self.height as i64 - 1);
        for y in y0..=y1 {
            let dy = y as f64 - c.y;
            for x in x0..=x1 {
                let dx = x as f64 - c.x;
                if dx * dx + dy * dy <= r2 {
                    self.bits[y as usize * self.width + x as usize] = true;
                }
            }
        }
    }

    fn segment(&mut self, a: Point, b: Point, radius: f64) {
        let len = a.dist(b);
        let steps = (len / 0.5).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            self.disc(Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t), radius);
        }
    }
}

fn blend(under: u8, over: u8, alpha: f64) -> u8 {
    (alpha * over as f64 + (1.0 - alpha) * under as f64).round().clamp(0.0, 255.0) as u8
}

/// Draws each trace onto a copy of `frame`; later traces cover earlier ones.
pub fn render_overlay(frame: &Frame, traces: &TraceSet, style: &OverlayStyle) -> Frame {
    let mut out = frame.clone();
    if traces.is_empty() || style.palette.is_empty() {
        return out;
    }
    let (w, h) = (frame.width(), frame.height());
    let radius = style.linewidth / 2.0;
    for (i, trace) in traces.traces.iter().enumerate() {
        let mut mask = Mask::new(w, h);
        let verts: Vec<Point> = trace.points.iter().map(|&p| snap_half(p)).collect();
        if verts.len() == 1 {
            mask.disc(verts[0], radius);
        }
        for pair in verts.windows(2) {
            mask.segment(pair[0], pair[1], radius);
        }
        if let Some(&end) = verts.last() {
            mask.disc(end, style.endpoint_radius);
        }
        let color = palette_color(i, &style.palette);
        for (idx, _) in mask.bits.iter().enumerate().filter(|(_, &b)| b) {
            let (x, y) = (idx % w, idx / w);
            let under = out.pixel(x, y);
            let px = [
                blend(under[0], color[0], style.alpha),
                blend(under[1], color[1], style.alpha),
                blend(under[2], color[2], style.alpha),
            ];
            out.set_pixel(x, y, px);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PointTrajectory;

    fn gray(w: usize, h: usize) -> Frame {
        let px = (0..w * h * 3).map(|i| (i % 97) as u8).collect();
        Frame::new(w, h, px, 0).unwrap()
    }

    fn trace(origin: usize, pts: &[(f64, f64)]) -> PointTrajectory {
        PointTrajectory {
            points: pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            valid: vec![true; pts.len()],
            origin,
        }
    }

    #[test]
    fn palette_lookup() {
        assert_eq!(palette_color(0, &DEFAULT_PALETTE), [255, 0, 0]);
        assert_eq!(palette_color(3, &DEFAULT_PALETTE), [0, 0, 255]);
        assert_eq!(palette_color(5, &DEFAULT_PALETTE), palette_color(0, &DEFAULT_PALETTE));
    }

    #[test]
    fn empty_trace_set_copies_frame() {
        let f = gray(48, 40);
        let out = render_overlay(&f, &TraceSet::empty(0, 6), &OverlayStyle::default());
        assert_eq!(out, f);
    }

    #[test]
    fn opaque_horizontal_trace() {
        let f = gray(64, 64);
        let set = TraceSet {
            traces: vec![trace(0, &[(10.0, 30.0), (20.0, 30.0), (30.2, 30.4)])],
            window_start: 0,
            window_end: 2,
        };
        let style = OverlayStyle::default();
        let out = render_overlay(&f, &set, &style);
        let mut changed = 0;
        for y in 0..64 {
            for x in 0..64 {
                let (p, q) = (f.pixel(x, y), out.pixel(x, y));
                if p != q {
                    changed += 1;
                    assert_eq!(q, RED);
                }
                let far = (y as f64 - 30.0).abs() > style.linewidth + style.endpoint_radius + 1.0
                    || (x as f64) < 10.0 - style.linewidth - 1.0
                    || (x as f64) > 30.5 + style.endpoint_radius + 1.0;
                if far {
                    assert_eq!(p, q, "pixel ({x}, {y}) should be untouched");
                }
            }
        }
        assert!(changed > 40);
        // Every pixel on the stroke centre line is colored.
        for x in 10..=30 {
            assert_eq!(out.pixel(x, 30), RED);
        }
    }

    #[test]
    fn alpha_blends() {
        let f = Frame::filled(32, 32, [0, 0, 100], 0).unwrap();
        let style = OverlayStyle {
            alpha: 0.5,
            ..OverlayStyle::default()
        };
        let set = TraceSet {
            traces: vec![trace(0, &[(16.0, 16.0), (18.0, 16.0)])],
            window_start: 0,
            window_end: 1,
        };
        let out = render_overlay(&f, &set, &style);
        assert_eq!(out.pixel(17, 16), [128, 0, 50]);
    }

    #[test]
    fn later_traces_draw_on_top() {
        let f = gray(40, 40);
        let set = TraceSet {
            traces: vec![
                trace(0, &[(5.0, 20.0), (35.0, 20.0)]),
                trace(1, &[(20.0, 5.0), (20.0, 35.0)]),
            ],
            window_start: 0,
            window_end: 1,
        };
        let out = render_overlay(&f, &set, &OverlayStyle::default());
        assert_eq!(out.pixel(20, 20), YELLOW);
        assert_eq!(out.pixel(8, 20), RED);
    }

    #[test]
    fn style_validation() {
        assert!(OverlayStyle::default().validate().is_ok());
        assert!(OverlayStyle { linewidth: 0.5, ..Default::default() }.validate().is_err());
        assert!(OverlayStyle { palette: vec![], ..Default::default() }.validate().is_err());
        assert!(OverlayStyle { alpha: 1.1, ..Default::default() }.validate().is_err());
    }
}
