//! Frame synthesis: warp the fluid layer along the integrated motion, blend
//! the two endpoint warps, fill holes, and composite over the background.

mod composite;
mod splat;

pub use composite::{composite, hole_fill, Composite, ALPHA_EPS};
pub use splat::{blend_symmetric, splat_forward, Partial, COVERAGE_EPS};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{DisplacementMap, MotionField};
use crate::io::png::save_png;
use crate::io::SceneBundle;
use crate::motion::{integrate_euler_all, invert_displacement};
use crate::raster::{Image, Mask, Raster};

/// Background alpha under the fluid when no layers are supplied.
pub const LABEL_BACKGROUND_ALPHA: f32 = 0.25;

/// Frames rendered when none is requested.
pub const DEFAULT_FRAMES: usize = 60;

/// Everything the renderer composites.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack {
    /// RGBA fluid layer at the first frame; alpha is the fluid alpha.
    pub fluid_t0: Image,
    /// RGBA fluid layer at the last frame. When absent it is predicted by
    /// warping `fluid_t0` through the whole sequence.
    pub fluid_tn: Option<Image>,
    /// RGB or RGBA background; only the color channels are used.
    pub background: Image,
    pub alpha_b: Raster<f32>,
    pub z0: Raster<f32>,
    pub zn: Raster<f32>,
    /// Pixels copied verbatim from `fluid_t0` in every frame.
    pub pinned: Mask,
}

impl LayerStack {
    /// Layers from a scene, falling back to the image and fluid mask.
    pub fn from_scene(scene: &SceneBundle) -> Result<Self> {
        let (w, h) = scene.dims();
        let mask = &scene.fluid_mask;
        let fluid_t0 = match &scene.fluid_layer {
            Some(l) => l.clone(),
            None => Image::from_fn(w, h, 4, |u, v, c| {
                let m = if *mask.get(u, v) { 1.0 } else { 0.0 };
                if c < 3 {
                    scene.image.pixel(u, v)[c] * m
                } else {
                    m
                }
            }),
        };
        let (background, alpha_b) = match &scene.background_layer {
            Some(l) => (l.clone(), l.channel(3)),
            None => (
                scene.image.clone(),
                mask.map(|&m| if m { LABEL_BACKGROUND_ALPHA } else { 1.0 }),
            ),
        };
        let layers = Self {
            fluid_t0,
            fluid_tn: None,
            background,
            alpha_b,
            z0: scene.z_map.clone(),
            zn: scene.z_map.clone(),
            pinned: Raster::filled(w, h, false),
        };
        layers.validate()?;
        Ok(layers)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.background.dims()
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.dims();
        let mut dims = vec![
            ("fluid_t0", self.fluid_t0.dims()),
            ("alpha_b", self.alpha_b.dims()),
            ("z0", self.z0.dims()),
            ("zn", self.zn.dims()),
            ("pinned", self.pinned.dims()),
        ];
        if let Some(t) = &self.fluid_tn {
            dims.push(("fluid_tn", t.dims()));
        }
        for (name, d) in dims {
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
        let rgba = std::iter::once(&self.fluid_t0).chain(self.fluid_tn.as_ref());
        for img in rgba {
            if img.channels() != 4 {
                return Err(Error::InvalidInput("fluid layers must be RGBA".into()));
            }
            let alpha_ok = img.data().chunks(4).all(|p| (0.0..=1.0).contains(&p[3]));
            if !alpha_ok {
                return Err(Error::InvalidInput("fluid alpha outside [0, 1]".into()));
            }
        }
        if self.background.channels() < 3 {
            return Err(Error::InvalidInput("background needs color channels".into()));
        }
        if !self.alpha_b.data().iter().all(|a| (0.0..=1.0).contains(a)) {
            return Err(Error::InvalidInput("background alpha outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Composite of the unwarped layers.
    pub fn still(&self) -> Result<Composite> {
        composite(&self.fluid_t0, &self.fluid_t0.channel(3), &self.background, &self.alpha_b)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct FrameDiagnostics {
    pub index: usize,
    /// Fraction of pixels neither warp reached.
    pub hole_fraction: f64,
    /// Time weight of the forward warp, `(n - i) / n`.
    pub forward_weight: f64,
    /// Pixels with no alpha from either layer.
    pub fallback_pixels: usize,
}

/// `n + 1` RGB frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Image>,
    pub diagnostics: Vec<FrameDiagnostics>,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Write `frame_0000.png`, `frame_0001.png`, ... into `dir`.
    pub fn save_pngs(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let p = dir.join(format!("frame_{i:04}.png"));
                save_png(f, &p)?;
                Ok(p)
            })
            .collect()
    }
}

fn with_logits(layer: &Image, z: &Raster<f32>) -> Image {
    Image::stack(&[layer, &Image::from_raster(z)]).expect("validated shapes")
}

/// Render frames `0..=n`. In cyclic mode the last-frame layer is replaced
/// by the first, so frame `n` reproduces frame 0.
pub fn render_sequence(
    layers: &LayerStack,
    field: &MotionField,
    n: usize,
    cyclic: bool,
) -> Result<FrameSequence> {
    layers.validate()?;
    let (w, h) = layers.dims();
    if field.dims() != (w, h) {
        return Err(Error::DimensionMismatch {
            asset: "motion field".into(),
            want_w: w,
            want_h: h,
            got_w: field.width(),
            got_h: field.height(),
        });
    }
    if n == 0 {
        let still = layers.still()?;
        return Ok(FrameSequence {
            diagnostics: vec![FrameDiagnostics {
                index: 0,
                hole_fraction: 0.0,
                forward_weight: 1.0,
                fallback_pixels: still.fallback.count(),
            }],
            frames: vec![still.image],
        });
    }
    let mut field = field.clone();
    for (d, &p) in field.data.data_mut().iter_mut().zip(layers.pinned.data()) {
        if p {
            *d = [0.0; 2];
        }
    }
    let forward = integrate_euler_all(&field, n);
    let inverse: Vec<DisplacementMap> = forward.par_iter().map(invert_displacement).collect();
    let t0 = with_logits(&layers.fluid_t0, &layers.z0);
    let tn_layer = if cyclic {
        layers.fluid_t0.clone()
    } else {
        match &layers.fluid_tn {
            Some(l) => l.clone(),
            None => hole_fill(&splat_forward(&layers.fluid_t0, &forward[n], &layers.z0))?,
        }
    };
    let zn = if cyclic { &layers.z0 } else { &layers.zn };
    let tn = with_logits(&tn_layer, zn);
    let rendered: Vec<(Image, FrameDiagnostics)> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let fwd = splat_forward(&t0, &forward[i], &layers.z0);
            let bwd = splat_forward(&tn, &inverse[n - i], zn);
            let blended = blend_symmetric(&fwd, &bwd, &fwd.image.channel(4), &bwd.image.channel(4), i, n);
            let hole_fraction = blended.hole_fraction();
            let mut fluid = hole_fill(&blended)?;
            for v in 0..h {
                for u in 0..w {
                    if *layers.pinned.get(u, v) {
                        fluid.pixel_mut(u, v)[..4].copy_from_slice(layers.fluid_t0.pixel(u, v));
                    }
                }
            }
            let alpha_f = fluid.channel(3).map(|a| a.clamp(0.0, 1.0));
            let out = composite(&fluid, &alpha_f, &layers.background, &layers.alpha_b)?;
            Ok((
                out.image,
                FrameDiagnostics {
                    index: i,
                    hole_fraction,
                    forward_weight: (n - i) as f64 / n as f64,
                    fallback_pixels: out.fallback.count(),
                },
            ))
        })
        .collect::<Result<_>>()?;
    let (frames, diagnostics) = rendered.into_iter().unzip();
    Ok(FrameSequence {
        frames,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn max_diff(a: &Image, b: &Image) -> f32 {
        a.data().iter().zip(b.data()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn zero_field_repeats_the_input() {
        let scene = synthetic::flat_channel(20, 12).unwrap();
        let layers = LayerStack::from_scene(&scene).unwrap();
        let seq = render_sequence(&layers, &MotionField::zeros(20, 12), 1, false).unwrap();
        assert_eq!(seq.len(), 2);
        for f in &seq.frames {
            assert!(max_diff(f, &scene.image) <= 1e-6);
        }
    }

    #[test]
    fn single_frame_is_passthrough() {
        let scene = synthetic::curved_valley(16, 12).unwrap();
        let layers = LayerStack::from_scene(&scene).unwrap();
        let seq = render_sequence(&layers, &MotionField::constant(16, 12, [1.0, 0.0]), 0, true).unwrap();
        assert_eq!(seq.len(), 1);
        assert!(max_diff(&seq.frames[0], &scene.image) <= 1e-6);
    }

    #[test]
    fn cyclic_last_frame_matches_first() {
        let scene = synthetic::slanted_plane(24, 16).unwrap();
        let layers = LayerStack::from_scene(&scene).unwrap();
        let field = MotionField::from_fn(24, 16, |u, v| [0.5 + 0.02 * v as f64, 0.1 * (u as f64 * 0.3).sin()]);
        let seq = render_sequence(&layers, &field, 6, true).unwrap();
        assert!(max_diff(&seq.frames[0], &seq.frames[6]) <= 1e-6);
        assert!(max_diff(&seq.frames[0], &seq.frames[3]) > 1e-3);
    }

    #[test]
    fn stripe_moves_with_constant_field() {
        let (w, h) = (40, 8);
        let stripe = |u: usize| (10..13).contains(&u);
        let fluid = Image::from_fn(w, h, 4, |u, _, _| if stripe(u) { 1.0 } else { 0.0 });
        let layers = LayerStack {
            fluid_t0: fluid,
            fluid_tn: None,
            background: Image::new(w, h, 3),
            alpha_b: Raster::filled(w, h, 1.0),
            z0: Raster::filled(w, h, 0.0),
            zn: Raster::filled(w, h, 0.0),
            pinned: Raster::filled(w, h, false),
        };
        let seq = render_sequence(&layers, &MotionField::constant(w, h, [2.0, 0.0]), 4, false).unwrap();
        let centroid = |img: &Image| {
            let (mut m0, mut m1) = (0.0, 0.0);
            for v in 0..h {
                for u in 0..w {
                    let x = img.pixel(u, v)[0] as f64;
                    m0 += x;
                    m1 += x * u as f64;
                }
            }
            m1 / m0
        };
        let c0 = centroid(&seq.frames[0]);
        for (i, f) in seq.frames.iter().enumerate() {
            let c = centroid(f);
            assert!((c - c0 - 2.0 * i as f64).abs() <= 0.25, "frame {i}: {c} vs {c0}");
        }
    }

    #[test]
    fn transparent_fluid_leaves_background_untouched() {
        let scene = synthetic::channel_island(20, 16).unwrap();
        let mut layers = LayerStack::from_scene(&scene).unwrap();
        for p in layers.fluid_t0.data_mut().chunks_mut(4) {
            p[3] = 0.0;
        }
        let field = MotionField::constant(20, 16, [1.5, -0.5]);
        for f in render_sequence(&layers, &field, 3, false).unwrap().frames {
            assert_eq!(f, layers.background);
        }
    }

    #[test]
    fn pinned_pixels_stay_put() {
        let scene = synthetic::flat_channel(20, 12).unwrap();
        let mut layers = LayerStack::from_scene(&scene).unwrap();
        layers.pinned.set(10, 6, true);
        let field = MotionField::constant(20, 12, [1.0, 0.0]);
        let seq = render_sequence(&layers, &field, 4, false).unwrap();
        for f in &seq.frames {
            let want = scene.image.pixel(10, 6);
            for k in 0..3 {
                assert!((f.pixel(10, 6)[k] - want[k]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn mismatched_field_is_rejected() {
        let scene = synthetic::flat_channel(20, 12).unwrap();
        let layers = LayerStack::from_scene(&scene).unwrap();
        let r = render_sequence(&layers, &MotionField::zeros(10, 12), 3, false);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }
}
