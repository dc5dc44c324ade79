//! Scene bundles and their JSON manifest.
//!
//! A manifest names every asset by a path relative to the manifest file:
//!
//! ```json
//! {
//!   "image": "image.png",
//!   "depth": "depth.pfm",
//!   "depth_scale": 0.001,
//!   "fluid_mask": "mask.png",
//!   "intrinsics": { "fx": 128, "fy": 128, "cx": 128, "cy": 128 },
//!   "hints": [ { "u": 10, "v": 20, "vx": 1.5, "vy": 0.0 } ],
//!   "fluid_layer": "fluid.png",
//!   "background_layer": "background.png",
//!   "z_map": "z.pfm",
//!   "gt_flow": "flow.flo"
//! }
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::MotionField;
use crate::io::{flo, pfm, png};
use crate::raster::{Image, Mask, Raster};

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    /// 90 degree vertical field of view centered on the image.
    pub fn from_fov90(width: usize, height: usize) -> Self {
        let fy = height as f64 / 2.0;
        Self {
            fx: fy,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|x| x.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "intrinsics must be finite with positive focal lengths: {self:?}"
            )));
        }
        Ok(())
    }
}

/// A user-placed velocity sample: pixel position and velocity in pixels/frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseHint {
    pub u: f64,
    pub v: f64,
    pub vx: f64,
    pub vy: f64,
}

impl SparseHint {
    pub fn new(u: f64, v: f64, vx: f64, vy: f64) -> Self {
        Self { u, v, vx, vy }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.u, self.v]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.vx, self.vy]
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let inside = self.u >= 0.0
            && self.v >= 0.0
            && self.u <= (width - 1) as f64
            && self.v <= (height - 1) as f64;
        if !inside || !self.vx.is_finite() || !self.vy.is_finite() {
            return Err(Error::InvalidInput(format!(
                "hint at ({}, {}) with velocity ({}, {}) is outside the {}x{} image or not finite",
                self.u, self.v, self.vx, self.vy, width, height
            )));
        }
        Ok(())
    }
}

/// The on-disk manifest document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub image: String,
    pub depth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_scale: Option<f64>,
    pub fluid_mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<CameraIntrinsics>,
    #[serde(default)]
    pub hints: Vec<SparseHint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluid_layer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_layer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_map: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_flow: Option<String>,
}

/// Default meters-per-unit for 16-bit PNG depth (millimeters).
pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;

/// Everything the pipeline needs about one still image.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    /// RGB in `[0, 1]`.
    pub image: Image,
    /// Meters, strictly positive.
    pub depth: Raster<f64>,
    pub fluid_mask: Mask,
    pub intrinsics: CameraIntrinsics,
    pub hints: Vec<SparseHint>,
    /// RGBA fluid layer; alpha is the fluid transparency.
    pub fluid_layer: Option<Image>,
    /// RGBA background layer; alpha is the background transparency.
    pub background_layer: Option<Image>,
    /// Splat logits; zeros when not supplied.
    pub z_map: Raster<f32>,
    pub gt_flow: Option<MotionField>,
}

impl SceneBundle {
    /// Assemble a bundle from in-memory rasters and validate it.
    pub fn new(
        image: Image,
        depth: Raster<f64>,
        fluid_mask: Mask,
        intrinsics: Option<CameraIntrinsics>,
    ) -> Result<Self> {
        let (w, h) = image.dims();
        let bundle = Self {
            intrinsics: intrinsics.unwrap_or_else(|| CameraIntrinsics::from_fov90(w, h)),
            image,
            depth,
            fluid_mask,
            hints: Vec::new(),
            fluid_layer: None,
            background_layer: None,
            z_map: Raster::filled(w, h, 0.0),
            gt_flow: None,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.dims();
        if w == 0 || h == 0 {
            return Err(Error::InvalidInput("image is empty".into()));
        }
        if self.image.channels() != 3 {
            return Err(Error::InvalidInput("image must be RGB".into()));
        }
        check_dims("depth", (w, h), self.depth.dims())?;
        check_dims("fluid_mask", (w, h), self.fluid_mask.dims())?;
        check_dims("z_map", (w, h), self.z_map.dims())?;
        if let Some(l) = &self.fluid_layer {
            check_dims("fluid_layer", (w, h), l.dims())?;
        }
        if let Some(l) = &self.background_layer {
            check_dims("background_layer", (w, h), l.dims())?;
        }
        if let Some(f) = &self.gt_flow {
            check_dims("gt_flow", (w, h), f.dims())?;
        }
        check_depth("depth", &self.depth)?;
        self.intrinsics.validate()?;
        for hint in &self.hints {
            hint.validate(w, h)?;
        }
        Ok(())
    }

    /// Write the bundle as a manifest directory (PNG image/mask, PFM depth).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        png::save_png(&self.image, dir.join("image.png"))?;
        let depth32 = self.depth.map(|&d| d as f32);
        pfm::write_pfm(&depth32, dir.join("depth.pfm"))?;
        png::save_mask(&self.fluid_mask, dir.join("mask.png"))?;
        let mut manifest = Manifest {
            image: "image.png".into(),
            depth: "depth.pfm".into(),
            fluid_mask: "mask.png".into(),
            intrinsics: Some(self.intrinsics),
            hints: self.hints.clone(),
            ..Default::default()
        };
        if self.z_map.data().iter().any(|&z| z != 0.0) {
            pfm::write_pfm(&self.z_map, dir.join("z.pfm"))?;
            manifest.z_map = Some("z.pfm".into());
        }
        if let Some(l) = &self.fluid_layer {
            png::save_png(l, dir.join("fluid.png"))?;
            manifest.fluid_layer = Some("fluid.png".into());
        }
        if let Some(l) = &self.background_layer {
            png::save_png(l, dir.join("background.png"))?;
            manifest.background_layer = Some("background.png".into());
        }
        if let Some(f) = &self.gt_flow {
            flo::write_flo(f, dir.join("gt.flo"))?;
            manifest.gt_flow = Some("gt.flo".into());
        }
        let path = dir.join("scene.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
        Ok(path)
    }
}

fn check_dims(asset: &str, want: (usize, usize), got: (usize, usize)) -> Result<()> {
    if want != got {
        return Err(Error::DimensionMismatch {
            asset: asset.to_string(),
            want_w: want.0,
            want_h: want.1,
            got_w: got.0,
            got_h: got.1,
        });
    }
    Ok(())
}

fn check_depth(asset: &str, depth: &Raster<f64>) -> Result<()> {
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let d = *depth.get(u, v);
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::NonPositiveDepth {
                    asset: asset.to_string(),
                    u,
                    v,
                    value: d,
                });
            }
        }
    }
    Ok(())
}

/// Load a scene from a manifest file, or from a directory holding `scene.json`.
pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneBundle> {
    let path = path.as_ref();
    let manifest_path = if path.is_dir() {
        path.join("scene.json")
    } else {
        path.to_path_buf()
    };
    if !manifest_path.is_file() {
        return Err(Error::MissingFile {
            asset: "manifest".into(),
            path: manifest_path,
        });
    }
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(&manifest_path)?)?;
    let base = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    load_scene_with(&manifest, |asset, rel| {
        let p = base.join(rel);
        std::fs::read(&p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile {
                asset: asset.to_string(),
                path: p.clone(),
            },
            _ => Error::Io(e),
        })
    })
}

/// Load a scene whose assets are held in memory, keyed by manifest path.
pub fn load_scene_from_memory(
    manifest: &Manifest,
    files: &HashMap<String, Vec<u8>>,
) -> Result<SceneBundle> {
    load_scene_with(manifest, |asset, rel| {
        files.get(rel).cloned().ok_or_else(|| Error::MissingFile {
            asset: asset.to_string(),
            path: PathBuf::from(rel),
        })
    })
}

fn load_scene_with(
    manifest: &Manifest,
    mut fetch: impl FnMut(&str, &str) -> Result<Vec<u8>>,
) -> Result<SceneBundle> {
    let image = png::decode_rgb(&fetch("image", &manifest.image)?)?;
    let (w, h) = image.dims();

    let depth_bytes = fetch("depth", &manifest.depth)?;
    let depth32 = if manifest.depth.to_ascii_lowercase().ends_with(".pfm")
        || depth_bytes.starts_with(b"Pf")
    {
        pfm::decode_pfm(&depth_bytes)?
    } else {
        png::decode_depth_png(
            &depth_bytes,
            manifest.depth_scale.unwrap_or(DEFAULT_DEPTH_SCALE),
        )?
    };
    check_dims("depth", (w, h), depth32.dims())?;
    let depth = depth32.map(|&d| d as f64);
    check_depth("depth", &depth)?;

    let fluid_mask = png::decode_mask(&fetch("fluid_mask", &manifest.fluid_mask)?)?;
    check_dims("fluid_mask", (w, h), fluid_mask.dims())?;

    let fluid_layer = match &manifest.fluid_layer {
        Some(p) => Some(png::decode_rgba(&fetch("fluid_layer", p)?)?),
        None => None,
    };
    let background_layer = match &manifest.background_layer {
        Some(p) => Some(png::decode_rgba(&fetch("background_layer", p)?)?),
        None => None,
    };
    let z_map = match &manifest.z_map {
        Some(p) => pfm::decode_pfm(&fetch("z_map", p)?)?,
        None => Raster::filled(w, h, 0.0),
    };
    let gt_flow = match &manifest.gt_flow {
        Some(p) => Some(flo::decode_flo(&fetch("gt_flow", p)?)?),
        None => None,
    };

    let bundle = SceneBundle {
        intrinsics: manifest
            .intrinsics
            .unwrap_or_else(|| CameraIntrinsics::from_fov90(w, h)),
        image,
        depth,
        fluid_mask,
        hints: manifest.hints.clone(),
        fluid_layer,
        background_layer,
        z_map,
        gt_flow,
    };
    bundle.validate()?;
    Ok(bundle)
}
