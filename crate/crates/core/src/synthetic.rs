//! Procedural test scenes with analytic depth.
//!
//! Every scene comes with hints, so it runs end to end without any input
//! files. Rivers touch the image border on both ends, which gives the
//! simulation an inflow and an outflow edge.

use crate::error::Result;
use crate::io::{CameraIntrinsics, SceneBundle, SparseHint};
use crate::raster::{Image, Mask, Raster};

/// Names accepted by [`by_name`].
pub const SCENE_NAMES: [&str; 5] = [
    "flat_channel",
    "channel_island",
    "slanted_plane",
    "curved_valley",
    "waterfall",
];

pub fn by_name(name: &str, width: usize, height: usize) -> Option<Result<SceneBundle>> {
    Some(match name {
        "flat_channel" => flat_channel(width, height),
        "channel_island" => channel_island(width, height),
        "slanted_plane" => slanted_plane(width, height),
        "curved_valley" => curved_valley(width, height),
        "waterfall" => waterfall(width, height),
        _ => return None,
    })
}

/// All named scenes at one size.
pub fn all_scenes(width: usize, height: usize) -> Result<Vec<(&'static str, SceneBundle)>> {
    SCENE_NAMES
        .iter()
        .map(|&n| Ok((n, by_name(n, width, height).expect("known name")?)))
        .collect()
}

/// Water blue inside the mask, textured rock outside.
fn paint(mask: &Mask) -> Image {
    let (w, h) = mask.dims();
    Image::from_fn(w, h, 3, |u, v, c| {
        let t = ((u as f32 * 0.37).sin() * (v as f32 * 0.23).cos() + 1.0) * 0.5;
        let water = [0.15 + 0.1 * t, 0.35 + 0.15 * t, 0.7 + 0.2 * t];
        let rock = [0.45 + 0.2 * t, 0.4 + 0.15 * t, 0.3 + 0.1 * t];
        if *mask.get(u, v) {
            water[c]
        } else {
            rock[c]
        }
    })
}

fn bundle(depth: Raster<f64>, mask: Mask, hints: Vec<SparseHint>) -> Result<SceneBundle> {
    let (w, h) = mask.dims();
    let mut s = SceneBundle::new(paint(&mask), depth, mask, Some(CameraIntrinsics::from_fov90(w, h)))?;
    s.hints = hints;
    s.validate()?;
    Ok(s)
}

fn band(h: usize) -> (usize, usize) {
    (h / 4, 3 * h / 4)
}

/// Fronto-parallel water at constant depth, a horizontal band flowing right.
pub fn flat_channel(width: usize, height: usize) -> Result<SceneBundle> {
    let (lo, hi) = band(height);
    let mask = Raster::from_fn(width, height, |_, v| v >= lo && v < hi);
    let depth = Raster::filled(width, height, 4.0);
    let mid = (lo + hi) as f64 / 2.0;
    let hints = vec![
        SparseHint::new(width as f64 * 0.2, mid, 1.0, 0.0),
        SparseHint::new(width as f64 * 0.8, mid, 1.0, 0.0),
    ];
    bundle(depth, mask, hints)
}

/// The flat channel with a rock in the middle.
pub fn channel_island(width: usize, height: usize) -> Result<SceneBundle> {
    let (lo, hi) = band(height);
    let (cx, cy) = (width as f64 / 2.0, (lo + hi) as f64 / 2.0);
    let r = (hi - lo) as f64 / 5.0;
    let mask = Raster::from_fn(width, height, |u, v| {
        let (dx, dy) = (u as f64 - cx, v as f64 - cy);
        v >= lo && v < hi && dx * dx + dy * dy > r * r
    });
    let depth = Raster::filled(width, height, 4.0);
    let hints = vec![
        SparseHint::new(width as f64 * 0.15, cy, 1.2, 0.0),
        SparseHint::new(width as f64 * 0.85, cy, 1.2, 0.0),
    ];
    bundle(depth, mask, hints)
}

/// Plane tilted away from the camera toward the top of the image.
fn tilted_depth(width: usize, height: usize, z0: f64, tilt: f64) -> Raster<f64> {
    let k = CameraIntrinsics::from_fov90(width, height);
    Raster::from_fn(width, height, |_, v| {
        // plane z = z0 + tilt * y with y = -(v - cy) / fy * z
        z0 / (1.0 + tilt * (v as f64 - k.cy) / k.fy)
    })
}

/// A diagonal river on a receding plane.
pub fn slanted_plane(width: usize, height: usize) -> Result<SceneBundle> {
    let depth = tilted_depth(width, height, 5.0, 0.5);
    let (w, h) = (width as f64, height as f64);
    let half = h * 0.22;
    let mask = Raster::from_fn(width, height, |u, v| {
        let center = h * 0.2 + (u as f64 / w) * h * 0.6;
        (v as f64 - center).abs() < half
    });
    let hints = vec![
        SparseHint::new(w * 0.15, h * 0.29, 1.0, 0.6),
        SparseHint::new(w * 0.5, h * 0.5, 1.0, 0.6),
        SparseHint::new(w * 0.85, h * 0.71, 1.0, 0.6),
    ];
    bundle(depth, mask, hints)
}

/// Water running down the bottom of a U-shaped valley.
pub fn curved_valley(width: usize, height: usize) -> Result<SceneBundle> {
    let (w, h) = (width as f64, height as f64);
    let depth = Raster::from_fn(width, height, |u, v| {
        let x = (u as f64 - w / 2.0) / w;
        5.0 + 0.2 * (v as f64 / h) - 1.5 * x * x
    });
    let half = w * 0.18;
    let mask = Raster::from_fn(width, height, |u, _| (u as f64 - w / 2.0).abs() < half);
    let hints = vec![
        SparseHint::new(w / 2.0, h * 0.2, 0.0, 1.0),
        SparseHint::new(w / 2.0, h * 0.8, 0.0, 1.0),
        SparseHint::new(w / 2.0 - half * 0.6, h * 0.5, 0.1, 0.8),
    ];
    bundle(depth, mask, hints)
}

/// A steep sheet falling toward the bottom of the image.
pub fn waterfall(width: usize, height: usize) -> Result<SceneBundle> {
    let depth = tilted_depth(width, height, 6.0, -0.3);
    let w = width as f64;
    let mask = Raster::from_fn(width, height, |u, _| (u as f64 - w / 2.0).abs() < w * 0.25);
    let h = height as f64;
    let hints = vec![
        SparseHint::new(w / 2.0, h * 0.25, 0.0, 1.5),
        SparseHint::new(w / 2.0, h * 0.75, 0.0, 2.0),
    ];
    bundle(depth, mask, hints)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_scene_validates_and_has_border_flow() {
        for (name, s) in all_scenes(48, 40).unwrap() {
            assert!(s.fluid_mask.any(), "{name}");
            assert!(!s.hints.is_empty(), "{name}");
            for h in &s.hints {
                let (u, v) = (h.u.round() as usize, h.v.round() as usize);
                assert!(*s.fluid_mask.get(u, v), "{name}: hint outside water");
            }
        }
    }

    #[test]
    fn unknown_name_is_none() {
        assert!(by_name("lava", 8, 8).is_none());
    }
}
