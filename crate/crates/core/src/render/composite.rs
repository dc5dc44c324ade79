//! Hole filling and two-alpha compositing.

use super::splat::Partial;
use crate::error::{Error, Result};
use crate::raster::{Image, Mask, Raster};

/// Alpha sum at or below which a pixel falls back to the background.
pub const ALPHA_EPS: f32 = 1e-8;

/// Fill holes by repeated 3x3 means of already known pixels.
///
/// Each pass fills every hole with at least one known neighbor, using only
/// values known before the pass, so the result does not depend on visit
/// order and stays within the range of the known values.
pub fn hole_fill(partial: &Partial) -> Result<Image> {
    let (w, h) = partial.image.dims();
    let c = partial.image.channels();
    if w * h > 0 && !partial.coverage.any() {
        return Err(Error::AllHoles);
    }
    let mut img = partial.image.clone();
    let mut known = partial.coverage.clone();
    let mut holes: Vec<(usize, usize)> = (0..h)
        .flat_map(|v| (0..w).map(move |u| (u, v)))
        .filter(|&(u, v)| !*known.get(u, v))
        .collect();
    let mut sum = vec![0.0f64; c];
    while !holes.is_empty() {
        let mut filled = Vec::new();
        let mut rest = Vec::new();
        for &(u, v) in &holes {
            sum.iter_mut().for_each(|s| *s = 0.0);
            let mut n = 0;
            for nv in v.saturating_sub(1)..(v + 2).min(h) {
                for nu in u.saturating_sub(1)..(u + 2).min(w) {
                    if *known.get(nu, nv) {
                        n += 1;
                        for (s, &x) in sum.iter_mut().zip(img.pixel(nu, nv)) {
                            *s += x as f64;
                        }
                    }
                }
            }
            if n == 0 {
                rest.push((u, v));
            } else {
                let px: Vec<f32> = sum.iter().map(|s| (s / n as f64) as f32).collect();
                filled.push((u, v, px));
            }
        }
        for (u, v, px) in filled {
            img.pixel_mut(u, v).copy_from_slice(&px);
            known.set(u, v, true);
        }
        holes = rest;
    }
    Ok(img)
}

/// Output of [`composite`].
#[derive(Clone, Debug, PartialEq)]
pub struct Composite {
    /// RGB.
    pub image: Image,
    /// Pixels whose alphas summed to nothing and show the background.
    pub fallback: Mask,
}

/// `(a_f I_f + a_b I_b) / (a_f + a_b)` per pixel on the first three
/// channels of each layer.
pub fn composite(
    fluid: &Image,
    alpha_f: &Raster<f32>,
    background: &Image,
    alpha_b: &Raster<f32>,
) -> Result<Composite> {
    let (w, h) = background.dims();
    for (name, d) in [
        ("fluid", fluid.dims()),
        ("alpha_f", alpha_f.dims()),
        ("alpha_b", alpha_b.dims()),
    ] {
        if d != (w, h) {
            return Err(Error::DimensionMismatch {
                asset: name.into(),
                want_w: w,
                want_h: h,
                got_w: d.0,
                got_h: d.1,
            });
        }
    }
    if fluid.channels() < 3 || background.channels() < 3 {
        return Err(Error::InvalidInput("layers need at least three channels".into()));
    }
    let mut image = Image::new(w, h, 3);
    let mut fallback = Raster::filled(w, h, false);
    for v in 0..h {
        for u in 0..w {
            let (af, ab) = (*alpha_f.get(u, v), *alpha_b.get(u, v));
            let (f, b) = (fluid.pixel(u, v), background.pixel(u, v));
            let out = image.pixel_mut(u, v);
            let s = af + ab;
            if !(s > ALPHA_EPS) {
                out.copy_from_slice(&b[..3]);
                fallback.set(u, v, true);
                continue;
            }
            // weights computed once so that a zero alpha passes the other
            // layer through unchanged
            let wf = af / s;
            let wb = ab / s;
            for k in 0..3 {
                out[k] = if af == 0.0 {
                    b[k]
                } else if ab == 0.0 {
                    f[k]
                } else {
                    wf * f[k] + wb * b[k]
                };
            }
        }
    }
    Ok(Composite { image, fallback })
}
