use crate::types::Frame;

use super::{TrackerConfig, TrackerError};

/// A single-channel floating point image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    /// Rec. 601 luminance.
    pub fn luminance(frame: &Frame) -> Self {
        let data = frame
            .pixels()
            .chunks_exact(3)
            .map(|c| 0.299 * c[0] as f32 + 0.587 * c[1] as f32 + 0.114 * c[2] as f32)
            .collect();
        Self::new(frame.width(), frame.height(), data)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// 2x2 box average; odd trailing rows/columns are replicated.
    pub fn downsample(&self) -> GrayImage {
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            let y0 = 2 * y;
            let y1 = (y0 + 1).min(self.height - 1);
            for x in 0..w {
                let x0 = 2 * x;
                let x1 = (x0 + 1).min(self.width - 1);
                let sum = self.at(x0, y0) + self.at(x1, y0) + self.at(x0, y1) + self.at(x1, y1);
                data.push(sum * 0.25);
            }
        }
        GrayImage::new(w, h, data)
    }

    /// Central-difference gradients; one-sided at the borders.
    pub fn gradients(&self) -> (GrayImage, GrayImage) {
        let (w, h) = (self.width, self.height);
        let mut gx = vec![0.0f32; w * h];
        let mut gy = vec![0.0f32; w * h];
        for y in 0..h {
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            for x in 0..w {
                let xm = x.saturating_sub(1);
                let xp = (x + 1).min(w - 1);
                gx[y * w + x] = (self.at(xp, y) - self.at(xm, y)) / (xp - xm).max(1) as f32;
                gy[y * w + x] = (self.at(x, yp) - self.at(x, ym)) / (yp - ym).max(1) as f32;
            }
        }
        (GrayImage::new(w, h, gx), GrayImage::new(w, h, gy))
    }

    /// True if bilinear sampling at `(x, y)` reads only pixels inside the image.
    #[inline]
    pub fn sample_in_bounds(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// Bilinear sample with coordinates clamped to the image.
    #[inline]
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.at(x0, y0) as f64 * (1.0 - fx) + self.at(x1, y0) as f64 * fx;
        let bottom = self.at(x0, y1) as f64 * (1.0 - fx) + self.at(x1, y1) as f64 * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// One pyramid level: the image plus its spatial gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub image: GrayImage,
    pub grad_x: GrayImage,
    pub grad_y: GrayImage,
}

impl Level {
    fn new(image: GrayImage) -> Self {
        let (grad_x, grad_y) = image.gradients();
        Self {
            image,
            grad_x,
            grad_y,
        }
    }

    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }
}

/// Grayscale image pyramid; level 0 is full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<Level>,
}

impl Pyramid {
    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.levels.iter().map(|l| (l.width(), l.height())).collect()
    }
}

/// Dimensions of every pyramid level for a `width`x`height` input.
pub fn pyramid_dims(width: usize, height: usize, pyramid_levels: usize) -> Vec<(usize, usize)> {
    std::iter::successors(Some((width, height)), |&(w, h)| Some((w.div_ceil(2), h.div_ceil(2))))
        .take(pyramid_levels + 1)
        .collect()
}

/// Rejects configurations whose coarsest level cannot hold one tracking window.
pub fn check_fits(width: usize, height: usize, config: &TrackerConfig) -> Result<(), TrackerError> {
    let side = 2 * config.window_half + 1;
    let (cw, ch) = *pyramid_dims(width, height, config.pyramid_levels)
        .last()
        .expect("at least one level");
    if cw < side || ch < side {
        return Err(TrackerError::PyramidTooDeep {
            width,
            height,
            levels: config.pyramid_levels,
            window: side,
        });
    }
    Ok(())
}

pub fn build_pyramid(frame: &Frame, config: &TrackerConfig) -> Result<Pyramid, TrackerError> {
    config.validate()?;
    check_fits(frame.width(), frame.height(), config)?;
    let mut images = vec![GrayImage::luminance(frame)];
    for _ in 0..config.pyramid_levels {
        let next = images.last().expect("non-empty").downsample();
        images.push(next);
    }
    Ok(Pyramid {
        levels: images.into_iter().map(Level::new).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_frame_is_fixed_point() {
        let frame = Frame::filled(64, 48, [128, 128, 128], 0).unwrap();
        let pyr = build_pyramid(&frame, &TrackerConfig {
            pyramid_levels: 2,
            ..TrackerConfig::default()
        })
        .unwrap();
        for level in &pyr.levels {
            assert!(level.image.data.iter().all(|&v| v == 128.0));
            assert!(level.grad_x.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn level_dims_256() {
        let frame = Frame::filled(256, 256, [1, 2, 3], 0).unwrap();
        let pyr = build_pyramid(&frame, &TrackerConfig::default()).unwrap();
        assert_eq!(pyr.dims(), vec![(256, 256), (128, 128), (64, 64), (32, 32)]);
    }

    #[test]
    fn checkerboard_averages_to_half() {
        let mut data = Vec::new();
        for y in 0..8 {
            for x in 0..8 {
                data.push(if (x + y) % 2 == 0 { 0.0 } else { 255.0 });
            }
        }
        let img = GrayImage::new(8, 8, data);
        let down = img.downsample();
        assert_eq!((down.width, down.height), (4, 4));
        assert!(down.data.iter().all(|&v| v == 127.5));
    }

    #[test]
    fn odd_dims_replicate_edges() {
        let img = GrayImage::new(3, 1, vec![0.0, 4.0, 8.0]);
        let down = img.downsample();
        assert_eq!(down.data, vec![2.0, 8.0]);
    }

    #[test]
    fn luminance_weights() {
        let frame = Frame::filled(32, 32, [255, 0, 0], 0).unwrap();
        let lum = GrayImage::luminance(&frame);
        assert!((lum.data[0] - 0.299 * 255.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_deep_pyramid_on_small_frame() {
        let frame = Frame::filled(32, 32, [0, 0, 0], 0).unwrap();
        let err = build_pyramid(&frame, &TrackerConfig::default()).unwrap_err();
        assert!(matches!(err, TrackerError::PyramidTooDeep { .. }));
        let ok = TrackerConfig {
            pyramid_levels: 1,
            ..TrackerConfig::default()
        };
        assert_eq!(build_pyramid(&frame, &ok).unwrap().len(), 2);
    }

    #[test]
    fn bilinear_interpolates() {
        let img = GrayImage::new(2, 2, vec![0.0, 10.0, 20.0, 30.0]);
        assert_eq!(img.bilinear(0.5, 0.5), 15.0);
        assert_eq!(img.bilinear(1.0, 0.0), 10.0);
        assert!(img.sample_in_bounds(1.0, 1.0));
        assert!(!img.sample_in_bounds(1.01, 0.0));
    }

    proptest! {
        #[test]
        fn dimension_law(w in 32usize..700, h in 32usize..700, levels in 0usize..6) {
            let dims = pyramid_dims(w, h, levels);
            prop_assert_eq!(dims.len(), levels + 1);
            let (mut ew, mut eh) = (w, h);
            for (l, &(dw, dh)) in dims.iter().enumerate() {
                if l > 0 {
                    ew = (ew + 1) / 2;
                    eh = (eh + 1) / 2;
                }
                prop_assert_eq!((dw, dh), (ew, eh));
            }
            let img = GrayImage::new(w, h, vec![0.0; w * h]);
            let down = img.downsample();
            prop_assert_eq!((down.width, down.height), dims.get(1).copied().unwrap_or(((w + 1) / 2, (h + 1) / 2)));
        }
    }
}
