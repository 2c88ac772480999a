use crate::types::{Frame, Point};

use super::pyramid::GrayImage;
use super::TrackerError;

/// Exhaustive integer block matching by sum of absolute luminance differences.
///
/// Ties go to the smallest L1 displacement, then smaller `dy`, then smaller `dx`.
pub fn oracle_track_point(
    prev: &Frame,
    next: &Frame,
    p: (i64, i64),
    window_half: usize,
    search_radius: usize,
) -> Result<Point, TrackerError> {
    let a = GrayImage::luminance(prev);
    let b = GrayImage::luminance(next);
    let half = window_half as i64;
    let r = search_radius as i64;
    let reach = half + r;
    let (x, y) = p;
    let fits = |img: &GrayImage, reach: i64| {
        x - reach >= 0 && y - reach >= 0 && x + reach < img.width as i64 && y + reach < img.height as i64
    };
    if !fits(&a, half) || !fits(&b, reach) {
        return Err(TrackerError::OracleWindow {
            x,
            y,
            radius: search_radius,
        });
    }

    let mut best: Option<(f64, i64, i64, i64)> = None;
    for dy in -r..=r {
        for dx in -r..=r {
            let mut sad = 0.0f64;
            for wy in -half..=half {
                for wx in -half..=half {
                    let pa = a.at((x + wx) as usize, (y + wy) as usize) as f64;
                    let pb = b.at((x + wx + dx) as usize, (y + wy + dy) as usize) as f64;
                    sad += (pa - pb).abs();
                }
            }
            let key = (sad, dx.abs() + dy.abs(), dy, dx);
            let better = match best {
                None => true,
                Some(cur) => {
                    key.0 < cur.0
                        || (key.0 == cur.0 && (key.1, key.2, key.3) < (cur.1, cur.2, cur.3))
                }
            };
            if better {
                best = Some(key);
            }
        }
    }
    let (_, _, dy, dx) = best.expect("search square is non-empty");
    Ok(Point::new((x + dx) as f64, (y + dy) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn identical_frames_pick_origin() {
        let f = synth::noise_frame(64, 64, 3, 0);
        assert_eq!(oracle_track_point(&f, &f, (30, 30), 5, 5).unwrap(), Point::new(30.0, 30.0));
    }

    #[test]
    fn finds_cyclic_shift() {
        let f = synth::noise_frame(64, 64, 3, 0);
        let g = synth::cyclic_shift(&f, 3, 0, 1);
        assert_eq!(oracle_track_point(&f, &g, (30, 30), 5, 5).unwrap(), Point::new(33.0, 30.0));
    }

    #[test]
    fn uniform_frames_pick_origin() {
        let f = Frame::filled(64, 64, [40, 40, 40], 0).unwrap();
        assert_eq!(oracle_track_point(&f, &f, (32, 32), 5, 5).unwrap(), Point::new(32.0, 32.0));
    }

    #[test]
    fn window_must_fit() {
        let f = synth::noise_frame(64, 64, 3, 0);
        assert!(matches!(
            oracle_track_point(&f, &f, (6, 30), 5, 5),
            Err(TrackerError::OracleWindow { .. })
        ));
    }
}
