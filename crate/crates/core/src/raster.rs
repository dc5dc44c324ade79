//! Row-major rasters with top-left origin and y-down pixel coordinates.
//!
//! Pixel `(u, v)` is column `u`, row `v`; its center sits at the integer
//! coordinate itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single-value-per-pixel raster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "raster data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < self.width && v < self.height);
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[v * self.width + u]
    }

    #[inline]
    pub fn get_mut(&mut self, u: usize, v: usize) -> &mut T {
        &mut self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.dims() == other.dims()
    }
}

impl Raster<f64> {
    /// Bilinear sample with border clamping.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let (x0, x1, fx) = bilinear_axis(x, self.width);
        let (y0, y1, fy) = bilinear_axis(y, self.height);
        let a = *self.get(x0, y0) * (1.0 - fx) + *self.get(x1, y0) * fx;
        let b = *self.get(x0, y1) * (1.0 - fx) + *self.get(x1, y1) * fx;
        a * (1.0 - fy) + b * fy
    }
}

/// Left/right indices and fractional weight along one axis, clamped.
#[inline]
pub(crate) fn bilinear_axis(x: f64, n: usize) -> (usize, usize, f64) {
    let max = (n - 1) as f64;
    let x = x.clamp(0.0, max);
    let x0 = x.floor();
    let i0 = x0 as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, x - x0)
}

pub type Mask = Raster<bool>;

impl Mask {
    pub fn count(&self) -> usize {
        self.data().iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data().iter().any(|&b| b)
    }
}

/// Multi-channel float image, interleaved (`channels` values per pixel).
///
/// Colors live in `[0, 1]`; 8-bit data is promoted on load.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "image data has {} values, expected {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut img = Self::new(width, height, channels);
        for v in 0..height {
            for u in 0..width {
                for c in 0..channels {
                    img.data[(v * width + u) * channels + c] = f(u, v, c);
                }
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixel(&self, u: usize, v: usize) -> &[f32] {
        let i = (v * self.width + u) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, u: usize, v: usize) -> &mut [f32] {
        let i = (v * self.width + u) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Single channel as a raster.
    pub fn channel(&self, c: usize) -> Raster<f32> {
        Raster::from_fn(self.width, self.height, |u, v| self.pixel(u, v)[c])
    }

    /// Copy of channels `range` as a new image.
    pub fn select(&self, range: std::ops::Range<usize>) -> Image {
        let n = range.len();
        Image::from_fn(self.width, self.height, n, |u, v, c| {
            self.pixel(u, v)[range.start + c]
        })
    }

    /// Concatenate channels of images with equal dimensions.
    pub fn stack(parts: &[&Image]) -> Result<Image> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("no images to stack".into()))?;
        let (w, h) = first.dims();
        if parts.iter().any(|p| p.dims() != (w, h)) {
            return Err(Error::InvalidInput("stacked images differ in size".into()));
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut out = Image::new(w, h, channels);
        for v in 0..h {
            for u in 0..w {
                let dst = out.pixel_mut(u, v);
                let mut k = 0;
                for p in parts {
                    let src = p.pixel(u, v);
                    dst[k..k + src.len()].copy_from_slice(src);
                    k += src.len();
                }
            }
        }
        Ok(out)
    }

    pub fn from_raster(r: &Raster<f32>) -> Image {
        Image {
            width: r.width(),
            height: r.height(),
            channels: 1,
            data: r.data().to_vec(),
        }
    }

    /// Quantize to 8 bits with round-to-nearest.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}
