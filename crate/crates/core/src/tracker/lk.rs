use rayon::prelude::*;

use crate::types::{Frame, Point, PointTrajectory};

use super::pyramid::{build_pyramid, check_fits, GrayImage, Level, Pyramid};
use super::{TrackStatus, TrackerConfig, TrackerError};

/// Samples a square window centred on `(cx, cy)` into `out`.
///
/// Every sample in the window shares the same fractional offset, so the
/// bilinear weights are computed once when the window lies inside the image.
fn sample_window(img: &GrayImage, cx: f64, cy: f64, half: usize, out: &mut Vec<f64>) {
    out.clear();
    let h = half as f64;
    let (x0, y0) = (cx - h, cy - h);
    let side = 2 * half + 1;
    if img.sample_in_bounds(x0, y0) && img.sample_in_bounds(cx + h, cy + h) {
        let bx = x0.floor();
        let by = y0.floor();
        let fx = x0 - bx;
        let fy = y0 - by;
        let (bx, by) = (bx as usize, by as usize);
        let w = img.width;
        let last_x = img.width - 1;
        let last_y = img.height - 1;
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        for j in 0..side {
            let ya = by + j;
            let yb = (ya + 1).min(last_y);
            for i in 0..side {
                let xa = bx + i;
                let xb = (xa + 1).min(last_x);
                let v = img.data[ya * w + xa] as f64 * w00
                    + img.data[ya * w + xb] as f64 * w10
                    + img.data[yb * w + xa] as f64 * w01
                    + img.data[yb * w + xb] as f64 * w11;
                out.push(v);
            }
        }
    } else {
        for j in 0..side {
            for i in 0..side {
                out.push(img.bilinear(x0 + i as f64, y0 + j as f64));
            }
        }
    }
}

fn window_fits(level: &Level, c: Point, half: usize) -> bool {
    let h = half as f64;
    level.image.sample_in_bounds(c.x - h, c.y - h) && level.image.sample_in_bounds(c.x + h, c.y + h)
}

/// Smaller eigenvalue of the symmetric matrix `[[a, b], [b, c]]`.
fn min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    let mean = 0.5 * (a + c);
    let diff = 0.5 * (a - c);
    mean - (diff * diff + b * b).sqrt()
}

struct Scratch {
    prev: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    next: Vec<f64>,
}

impl Scratch {
    fn new(cfg: &TrackerConfig) -> Self {
        let n = cfg.window_pixels();
        Self {
            prev: Vec::with_capacity(n),
            gx: Vec::with_capacity(n),
            gy: Vec::with_capacity(n),
            next: Vec::with_capacity(n),
        }
    }
}

/// Tracks one point from `prev` to `next`, coarse to fine.
///
/// Bounds are enforced strictly at full resolution. Coarser levels sample
/// with edge clamping so points near the border still get a coarse estimate.
pub fn track_point(prev: &Pyramid, next: &Pyramid, p: Point, config: &TrackerConfig) -> (Point, TrackStatus) {
    let mut scratch = Scratch::new(config);
    track_point_with(prev, next, p, config, &mut scratch)
}

fn track_point_with(
    prev: &Pyramid,
    next: &Pyramid,
    p: Point,
    config: &TrackerConfig,
    s: &mut Scratch,
) -> (Point, TrackStatus) {
    let half = config.window_half;
    let npix = config.window_pixels() as f64;
    let levels = prev.len().min(next.len());

    if !window_fits(prev.level(0), p, half) {
        return (p, TrackStatus::OutOfBounds);
    }

    let mut guess = Point::default();
    for l in (0..levels).rev() {
        let scale = (1u64 << l) as f64;
        let lp = prev.level(l);
        let ln = next.level(l);
        let c = Point::new(p.x / scale, p.y / scale);

        sample_window(&lp.image, c.x, c.y, half, &mut s.prev);
        sample_window(&lp.grad_x, c.x, c.y, half, &mut s.gx);
        sample_window(&lp.grad_y, c.x, c.y, half, &mut s.gy);

        let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
        for (&ix, &iy) in s.gx.iter().zip(&s.gy) {
            gxx += ix * ix;
            gxy += ix * iy;
            gyy += iy * iy;
        }
        let det = gxx * gyy - gxy * gxy;

        if l == 0 && min_eigenvalue(gxx, gxy, gyy) / npix < config.min_eigen {
            return (p, TrackStatus::Lost);
        }

        let mut v = Point::default();
        if det > f64::EPSILON * (gxx + gyy).max(1.0).powi(2) {
            for _ in 0..config.max_iters {
                let q = c + guess + v;
                if l == 0 && !window_fits(ln, q, half) {
                    return (p, TrackStatus::OutOfBounds);
                }
                sample_window(&ln.image, q.x, q.y, half, &mut s.next);
                let (mut bx, mut by) = (0.0, 0.0);
                for k in 0..s.prev.len() {
                    let diff = s.prev[k] - s.next[k];
                    bx += diff * s.gx[k];
                    by += diff * s.gy[k];
                }
                let eta = Point::new((gyy * bx - gxy * by) / det, (gxx * by - gxy * bx) / det);
                v = v + eta;
                if eta.x.hypot(eta.y) < config.epsilon {
                    break;
                }
            }
        }

        if l > 0 {
            guess = Point::new(2.0 * (guess.x + v.x), 2.0 * (guess.y + v.y));
        } else {
            guess = guess + v;
        }
    }

    let out = p + guess;
    if !out.x.is_finite() || !out.y.is_finite() || !window_fits(next.level(0), out, half) {
        return (p, TrackStatus::OutOfBounds);
    }
    (out, TrackStatus::Tracked)
}

fn check_frames(frames: &[Frame]) -> Result<(), TrackerError> {
    if frames.len() < 2 {
        return Err(TrackerError::WindowTooShort(frames.len()));
    }
    let expected = (frames[0].width(), frames[0].height());
    for (index, f) in frames.iter().enumerate() {
        let actual = (f.width(), f.height());
        if actual != expected {
            return Err(TrackerError::FrameSizeMismatch {
                index,
                expected,
                actual,
            });
        }
    }
    Ok(())
}

/// Builds one pyramid per frame, in parallel.
pub fn build_pyramids(frames: &[Frame], config: &TrackerConfig) -> Result<Vec<Pyramid>, TrackerError> {
    frames.par_iter().map(|f| build_pyramid(f, config)).collect()
}

/// Chains [`track_point`] across consecutive frames for each query, starting
/// at the first frame. A point that fails stays frozen and invalid for the
/// rest of the window.
pub fn track_points(
    frames: &[Frame],
    queries: &[Point],
    config: &TrackerConfig,
) -> Result<Vec<PointTrajectory>, TrackerError> {
    check_frames(frames)?;
    config.validate()?;
    check_fits(frames[0].width(), frames[0].height(), config)?;
    let pyramids = build_pyramids(frames, config)?;
    track_points_on_pyramids(&pyramids, queries, config)
}

pub fn track_points_on_pyramids(
    pyramids: &[Pyramid],
    queries: &[Point],
    config: &TrackerConfig,
) -> Result<Vec<PointTrajectory>, TrackerError> {
    if pyramids.len() < 2 {
        return Err(TrackerError::WindowTooShort(pyramids.len()));
    }
    let base = pyramids[0].level(0);
    let (w, h) = (base.width() as f64, base.height() as f64);
    for (index, q) in queries.iter().enumerate() {
        if !(q.x >= 0.0 && q.y >= 0.0 && q.x < w && q.y < h) {
            return Err(TrackerError::QueryOutOfFrame {
                index,
                x: q.x,
                y: q.y,
            });
        }
    }
    Ok(queries
        .par_iter()
        .enumerate()
        .map_init(
            || Scratch::new(config),
            |scratch, (origin, &q)| chain(pyramids, q, origin, config, scratch),
        )
        .collect())
}

fn chain(pyramids: &[Pyramid], q: Point, origin: usize, config: &TrackerConfig, s: &mut Scratch) -> PointTrajectory {
    let mut points = Vec::with_capacity(pyramids.len());
    let mut valid = Vec::with_capacity(pyramids.len());
    points.push(q);
    valid.push(true);
    let mut pos = q;
    let mut alive = true;
    for pair in pyramids.windows(2) {
        if alive {
            let (next, status) = track_point_with(&pair[0], &pair[1], pos, config, s);
            if status == TrackStatus::Tracked {
                pos = next;
            } else {
                alive = false;
            }
        }
        points.push(pos);
        valid.push(alive);
    }
    PointTrajectory { points, valid, origin }
}

/// Cell centres of a `k`x`k` grid, row-major.
pub fn grid_queries(width: usize, height: usize, k: usize) -> Vec<Point> {
    let (w, h) = (width as f64, height as f64);
    let kf = k as f64;
    (0..k)
        .flat_map(|j| {
            (0..k).map(move |i| Point::new((i as f64 + 0.5) * w / kf, (j as f64 + 0.5) * h / kf))
        })
        .collect()
}

pub fn track_grid(frames: &[Frame], k: usize, config: &TrackerConfig) -> Result<Vec<PointTrajectory>, TrackerError> {
    check_frames(frames)?;
    let queries = grid_queries(frames[0].width(), frames[0].height(), k);
    track_points(frames, &queries, config)
}
