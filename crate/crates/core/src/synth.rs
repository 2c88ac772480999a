//! Synthetic frames and episodes with known motion, for tests, benchmarks,
//! the `verify` command and the browser demo.

use crate::rng::SplitMix64;
use crate::types::{Episode, Frame, DEFAULT_ACTION_DIM};

/// Multi-octave value noise in `[0, 1]`, tileable with period `(w, h)`.
fn value_noise(w: usize, h: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix64::new(seed);
    let mut out = vec![0.0; w * h];
    let octaves = [(8usize, 1.0f64), (4, 0.6), (2, 0.35)];
    let total: f64 = octaves.iter().map(|o| o.1).sum();
    for &(cell, amp) in &octaves {
        let gw = w.div_ceil(cell);
        let gh = h.div_ceil(cell);
        let grid: Vec<f64> = (0..gw * gh).map(|_| rng.next_f64()).collect();
        for y in 0..h {
            let gy = y as f64 / cell as f64;
            let y0 = gy.floor() as usize;
            let fy = gy - y0 as f64;
            let (ya, yb) = (y0 % gh, (y0 + 1) % gh);
            for x in 0..w {
                let gx = x as f64 / cell as f64;
                let x0 = gx.floor() as usize;
                let fx = gx - x0 as f64;
                let (xa, xb) = (x0 % gw, (x0 + 1) % gw);
                let top = grid[ya * gw + xa] * (1.0 - fx) + grid[ya * gw + xb] * fx;
                let bot = grid[yb * gw + xa] * (1.0 - fx) + grid[yb * gw + xb] * fx;
                out[y * w + x] += amp * (top * (1.0 - fy) + bot * fy) / total;
            }
        }
    }
    out
}

fn noise_pixels(w: usize, h: usize, seed: u64) -> Vec<u8> {
    let r = value_noise(w, h, seed);
    let g = value_noise(w, h, seed ^ 0x5151);
    let b = value_noise(w, h, seed ^ 0xA3A3);
    let mut px = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        for c in [r[i], g[i], b[i]] {
            px.push((c * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    px
}

/// A richly textured RGB frame.
pub fn noise_frame(width: usize, height: usize, seed: u64, index: usize) -> Frame {
    Frame::new(width, height, noise_pixels(width, height, seed), index).expect("valid dimensions")
}

/// Cyclic shift: output pixel `(x, y)` takes input pixel `(x - dx, y - dy)`
/// (wrapping), so content moves by `(+dx, +dy)`.
pub fn cyclic_shift(frame: &Frame, dx: i64, dy: i64, index: usize) -> Frame {
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let mut px = Vec::with_capacity(frame.pixels().len());
    for y in 0..h {
        for x in 0..w {
            let sx = (x - dx).rem_euclid(w) as usize;
            let sy = (y - dy).rem_euclid(h) as usize;
            px.extend_from_slice(&frame.pixel(sx, sy));
        }
    }
    Frame::new(frame.width(), frame.height(), px, index).expect("same dimensions")
}

fn crop(src: &[u8], src_w: usize, x0: usize, y0: usize, w: usize, h: usize, index: usize) -> Frame {
    let mut px = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let row = ((y0 + y) * src_w + x0) * 3;
        px.extend_from_slice(&src[row..row + w * 3]);
    }
    Frame::new(w, h, px, index).expect("valid crop")
}

/// A camera pan over a large texture: content moves by `velocity` pixels
/// per frame with no wrap-around.
pub fn panning_sequence(width: usize, height: usize, len: usize, velocity: (i64, i64), seed: u64) -> Vec<Frame> {
    let span = |v: i64| v.unsigned_abs() as usize * len.saturating_sub(1);
    let (sx, sy) = (span(velocity.0), span(velocity.1));
    let (tw, th) = (width + sx, height + sy);
    let tex = noise_pixels(tw, th, seed);
    (0..len)
        .map(|k| {
            let k = k as i64;
            // Origin of crop k is o_0 - v*k with o_0 chosen to stay in range.
            let ox = if velocity.0 >= 0 { sx as i64 - velocity.0 * k } else { -velocity.0 * k };
            let oy = if velocity.1 >= 0 { sy as i64 - velocity.1 * k } else { -velocity.1 * k };
            crop(&tex, tw, ox as usize, oy as usize, width, height, k as usize)
        })
        .collect()
}

/// A textured square moving over a static textured background, with
/// actions describing its motion. Mimics an end effector crossing the scene.
pub fn moving_patch_episode(id: &str, width: usize, height: usize, len: usize, seed: u64) -> Episode {
    let background = noise_pixels(width, height, seed);
    let side = (width.min(height) / 5).max(12);
    let patch = noise_pixels(side, side, seed ^ 0xFEED);
    let margin = side as f64;
    let mut frames = Vec::with_capacity(len);
    let mut positions = Vec::with_capacity(len);
    for t in 0..len {
        let phase = if len > 1 { t as f64 / (len - 1) as f64 } else { 0.0 };
        let cx = margin + phase * (width as f64 - 3.0 * margin);
        let cy = height as f64 / 2.0 + (phase * std::f64::consts::PI).sin() * height as f64 / 6.0;
        let (x0, y0) = ((cx.round() as usize).min(width - side), (cy.round() as usize).min(height - side));
        let mut px = background.clone();
        for y in 0..side {
            let dst = ((y0 + y) * width + x0) * 3;
            let src = y * side * 3;
            px[dst..dst + side * 3].copy_from_slice(&patch[src..src + side * 3]);
        }
        frames.push(Frame::new(width, height, px, t).expect("valid dimensions"));
        positions.push((x0 as f64, y0 as f64));
    }
    let actions = (0..len)
        .map(|t| {
            let next = positions[(t + 1).min(len - 1)];
            let cur = positions[t];
            let mut a = vec![0.0; DEFAULT_ACTION_DIM];
            a[0] = (next.0 - cur.0) / width as f64;
            a[1] = (next.1 - cur.1) / height as f64;
            a[6] = if t * 2 < len { 1.0 } else { 0.0 };
            a
        })
        .collect();
    Episode {
        id: id.to_owned(),
        instruction: "move the block to the right".to_owned(),
        frames,
        actions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pan_moves_content_by_velocity() {
        let frames = panning_sequence(40, 36, 4, (2, -1), 3);
        for k in 0..3 {
            for y in 2..30 {
                for x in 0..36 {
                    let (nx, ny) = (x + 2, y - 1);
                    assert_eq!(frames[k].pixel(x, y), frames[k + 1].pixel(nx, ny));
                }
            }
        }
    }

    #[test]
    fn cyclic_shift_moves_content() {
        let f = noise_frame(32, 32, 1, 0);
        let g = cyclic_shift(&f, 3, -2, 1);
        assert_eq!(f.pixel(10, 10), g.pixel(13, 8));
        assert_eq!(f.pixel(31, 0), g.pixel(2, 30));
    }

    #[test]
    fn patch_episode_is_valid() {
        let ep = moving_patch_episode("e", 64, 64, 10, 1);
        assert!(crate::types::validate_episode(&ep).is_ok());
        assert_ne!(ep.frames[0], ep.frames[9]);
    }
}
