//! Dense 2-channel image-space vector fields.

use crate::raster::{bilinear_axis, Mask, Raster};

/// Per-pixel velocity in pixels/frame, with a validity mask.
///
/// Values outside `valid` are kept at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionField {
    pub data: Raster<[f64; 2]>,
    pub valid: Mask,
}

impl MotionField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            data: Raster::filled(width, height, [0.0; 2]),
            valid: Raster::filled(width, height, true),
        }
    }

    pub fn constant(width: usize, height: usize, value: [f64; 2]) -> Self {
        Self {
            data: Raster::filled(width, height, value),
            valid: Raster::filled(width, height, true),
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl FnMut(usize, usize) -> [f64; 2]) -> Self {
        Self {
            data: Raster::from_fn(width, height, f),
            valid: Raster::filled(width, height, true),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.data.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.data.height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.data.dims()
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> [f64; 2] {
        *self.data.get(u, v)
    }

    /// Bilinear sample with border clamping.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 2] {
        sample_vec2(&self.data, x, y)
    }

    /// Zero every value outside the valid mask.
    pub fn clear_invalid(&mut self) {
        let (w, h) = self.dims();
        for v in 0..h {
            for u in 0..w {
                if !*self.valid.get(u, v) {
                    self.data.set(u, v, [0.0; 2]);
                }
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            data: self.data.map(|p| [p[0] * s, p[1] * s]),
            valid: self.valid.clone(),
        }
    }

    /// Largest per-pixel magnitude over valid pixels.
    pub fn max_magnitude(&self) -> f64 {
        self.data
            .data()
            .iter()
            .zip(self.valid.data())
            .filter(|(_, &ok)| ok)
            .map(|(p, _)| p[0].hypot(p[1]))
            .fold(0.0, f64::max)
    }
}

/// Per-source-pixel displacement `D` with `M(x, y) = (x, y) + D(x, y)`.
///
/// `valid` is false where the integrated path left the raster.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementMap {
    pub data: Raster<[f64; 2]>,
    pub valid: Mask,
}

impl DisplacementMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            data: Raster::filled(width, height, [0.0; 2]),
            valid: Raster::filled(width, height, true),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.data.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.data.height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.data.dims()
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> [f64; 2] {
        *self.data.get(u, v)
    }

    /// Bilinear sample of the displacement at a sub-pixel position.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 2] {
        sample_vec2(&self.data, x, y)
    }
}

/// Bilinear sample of a 2-vector raster with border clamping.
pub fn sample_vec2(data: &Raster<[f64; 2]>, x: f64, y: f64) -> [f64; 2] {
    let (x0, x1, fx) = bilinear_axis(x, data.width());
    let (y0, y1, fy) = bilinear_axis(y, data.height());
    let p00 = data.get(x0, y0);
    let p10 = data.get(x1, y0);
    let p01 = data.get(x0, y1);
    let p11 = data.get(x1, y1);
    let mut out = [0.0; 2];
    for c in 0..2 {
        let a = p00[c] * (1.0 - fx) + p10[c] * fx;
        let b = p01[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = a * (1.0 - fy) + b * fy;
    }
    out
}
