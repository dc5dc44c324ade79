//! Forward warping with softmax splatting, and the two-sided blend.

use crate::field::DisplacementMap;
use crate::raster::{Image, Mask, Raster};

/// Accumulated weight below which a pixel counts as a hole.
pub const COVERAGE_EPS: f64 = 1e-6;

/// A warped image that may have holes.
#[derive(Clone, Debug, PartialEq)]
pub struct Partial {
    pub image: Image,
    pub coverage: Mask,
}

impl Partial {
    /// Fully covered copy of `image`.
    pub fn full(image: Image) -> Self {
        let (w, h) = image.dims();
        Self {
            image,
            coverage: Raster::filled(w, h, true),
        }
    }

    pub fn hole_fraction(&self) -> f64 {
        let n = self.coverage.data().len();
        if n == 0 {
            return 0.0;
        }
        (n - self.coverage.count()) as f64 / n as f64
    }
}

/// Scatter every valid source pixel to the four bilinear neighbors of
/// `(u, v) + D(u, v)` with weight `bilinear * exp(z)`, then normalize.
///
/// Sources are visited in row-major order, so accumulation is deterministic.
pub fn splat_forward(layer: &Image, disp: &DisplacementMap, z: &Raster<f32>) -> Partial {
    let (w, h) = layer.dims();
    let c = layer.channels();
    let mut acc = vec![0.0f64; w * h * c];
    let mut wsum = vec![0.0f64; w * h];
    for v in 0..h {
        for u in 0..w {
            if !*disp.valid.get(u, v) {
                continue;
            }
            let d = disp.get(u, v);
            let (x, y) = (u as f64 + d[0], v as f64 + d[1]);
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let e = (*z.get(u, v) as f64).exp();
            let src = layer.pixel(u, v);
            for (dx, dy, b) in [
                (0, 0, (1.0 - fx) * (1.0 - fy)),
                (1, 0, fx * (1.0 - fy)),
                (0, 1, (1.0 - fx) * fy),
                (1, 1, fx * fy),
            ] {
                if b == 0.0 {
                    continue;
                }
                let (tx, ty) = (x0 as i64 + dx, y0 as i64 + dy);
                if tx < 0 || ty < 0 || tx >= w as i64 || ty >= h as i64 {
                    continue;
                }
                let t = ty as usize * w + tx as usize;
                let wt = b * e;
                wsum[t] += wt;
                for k in 0..c {
                    acc[t * c + k] += wt * src[k] as f64;
                }
            }
        }
    }
    let mut image = Image::new(w, h, c);
    let coverage = Raster::from_fn(w, h, |u, v| wsum[v * w + u] > COVERAGE_EPS);
    for t in 0..w * h {
        if wsum[t] > COVERAGE_EPS {
            for k in 0..c {
                image.data_mut()[t * c + k] = (acc[t * c + k] / wsum[t]) as f32;
            }
        }
    }
    Partial { image, coverage }
}

/// Time-weighted softmax blend of the forward and backward warps at frame
/// `i` of `n`: weights `exp(z0) (n - i)` and `exp(zn) i`.
///
/// Pixels covered by one side take that side; pixels covered by neither
/// stay holes.
pub fn blend_symmetric(
    fwd: &Partial,
    bwd: &Partial,
    z0: &Raster<f32>,
    zn: &Raster<f32>,
    i: usize,
    n: usize,
) -> Partial {
    let (w, h) = fwd.image.dims();
    let c = fwd.image.channels();
    let mut image = Image::new(w, h, c);
    let mut coverage = Raster::filled(w, h, false);
    let (tf, tb) = ((n - i.min(n)) as f64, i.min(n) as f64);
    for v in 0..h {
        for u in 0..w {
            let a = *fwd.coverage.get(u, v);
            let b = *bwd.coverage.get(u, v);
            let wf = if a { (*z0.get(u, v) as f64).exp() * tf } else { 0.0 };
            let wb = if b { (*zn.get(u, v) as f64).exp() * tb } else { 0.0 };
            let out = image.pixel_mut(u, v);
            let (pf, pb) = (fwd.image.pixel(u, v), bwd.image.pixel(u, v));
            match (a, b) {
                (false, false) => continue,
                (true, false) => out.copy_from_slice(pf),
                (false, true) => out.copy_from_slice(pb),
                (true, true) if wb == 0.0 => out.copy_from_slice(pf),
                (true, true) if wf == 0.0 => out.copy_from_slice(pb),
                (true, true) => {
                    let s = wf + wb;
                    for k in 0..c {
                        out[k] = ((wf * pf[k] as f64 + wb * pb[k] as f64) / s) as f32;
                    }
                }
            }
            coverage.set(u, v, true);
        }
    }
    Partial { image, coverage }
}
