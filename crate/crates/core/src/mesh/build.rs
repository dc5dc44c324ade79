//! Regular-grid triangulation of a depth map.

use std::collections::BTreeSet;

use super::{edge_key, CellKind, FaceGeometry, SurfaceMesh, Vec3};
use crate::error::{Error, Result};
use crate::io::CameraIntrinsics;
use crate::raster::{Mask, Raster};

/// Depth ratio above which a triangle is treated as spanning an occlusion edge.
pub const DEFAULT_MAX_DEPTH_RATIO: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshParams {
    /// Pixel spacing between neighboring vertices.
    pub stride: usize,
    /// Triangles whose max/min vertex depth exceeds this are dropped.
    pub max_depth_ratio: f64,
    pub min_area: f64,
}

impl Default for MeshParams {
    fn default() -> Self {
        Self {
            stride: 4,
            max_depth_ratio: DEFAULT_MAX_DEPTH_RATIO,
            min_area: super::MIN_FACE_AREA,
        }
    }
}

impl MeshParams {
    pub fn with_stride(stride: usize) -> Self {
        Self {
            stride,
            ..Self::default()
        }
    }
}

/// Triangulate every `stride`-th pixel of the image.
///
/// Each grid quad is split along its top-left to bottom-right diagonal.
/// Vertices inside `fluid_mask` are FLUID; a face is FLUID when all three
/// of its vertices are.
pub fn build_mesh(
    depth: &Raster<f64>,
    fluid_mask: &Mask,
    intrinsics: &CameraIntrinsics,
    params: &MeshParams,
) -> Result<SurfaceMesh> {
    if params.stride == 0 {
        return Err(Error::InvalidConfig("stride must be at least 1".into()));
    }
    if !(params.max_depth_ratio >= 1.0) {
        return Err(Error::InvalidConfig("max_depth_ratio must be >= 1".into()));
    }
    let (w, h) = depth.dims();
    if fluid_mask.dims() != (w, h) {
        return Err(Error::DimensionMismatch {
            asset: "fluid_mask".into(),
            want_w: w,
            want_h: h,
            got_w: fluid_mask.width(),
            got_h: fluid_mask.height(),
        });
    }
    if w < 2 || h < 2 {
        return Err(Error::EmptyFluidRegion);
    }
    let s = params.stride;
    let cols = (w - 1) / s + 1;
    let rows = (h - 1) / s + 1;
    let mut vertices = Vec::with_capacity(cols * rows);
    let mut pixel_of_vertex = Vec::with_capacity(cols * rows);
    let mut vertex_flags = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let (u, v) = (c * s, r * s);
            let d = *depth.get(u, v);
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::NonPositiveDepth {
                    asset: "depth".into(),
                    u,
                    v,
                    value: d,
                });
            }
            vertices.push(super::unproject(u as f64, v as f64, d, intrinsics));
            pixel_of_vertex.push([u, v]);
            vertex_flags.push(if *fluid_mask.get(u, v) {
                CellKind::Fluid
            } else {
                CellKind::Solid
            });
        }
    }
    let mut triangles = Vec::new();
    let mut face_flags = Vec::new();
    // edges of dropped triangles that touched solid ground
    let mut solid_edges = BTreeSet::new();
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols.saturating_sub(1) {
            let tl = r * cols + c;
            let tr = tl + 1;
            let bl = tl + cols;
            let br = bl + 1;
            for t in [[tl, br, tr], [tl, bl, br]] {
                let fluid = t.iter().all(|&i| vertex_flags[i] == CellKind::Fluid);
                if keep_triangle(&vertices, t, params) {
                    triangles.push(t);
                    face_flags.push(if fluid { CellKind::Fluid } else { CellKind::Solid });
                } else if !fluid {
                    for k in 0..3 {
                        solid_edges.insert(edge_key(t[k], t[(k + 1) % 3]));
                    }
                }
            }
        }
    }
    if !face_flags.contains(&CellKind::Fluid) {
        return Err(Error::EmptyFluidRegion);
    }
    SurfaceMesh::assemble(
        vertices,
        triangles,
        face_flags,
        vertex_flags,
        pixel_of_vertex,
        solid_edges,
        Some((w, h)),
    )
}

fn keep_triangle(vertices: &[Vec3], t: [usize; 3], params: &MeshParams) -> bool {
    let z = t.map(|i| vertices[i].z);
    let zmax = z.iter().copied().fold(f64::MIN, f64::max);
    let zmin = z.iter().copied().fold(f64::MAX, f64::min);
    if zmax / zmin > params.max_depth_ratio {
        return false;
    }
    let g = FaceGeometry::new(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]);
    !g.is_degenerate(params.min_area)
}
