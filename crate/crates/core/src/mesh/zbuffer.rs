//! Pixel-center triangle rasterization with perspective-correct barycentrics.

use super::geometry::{project, Vec3};
use crate::io::CameraIntrinsics;
use crate::raster::Raster;

const EDGE_EPS: f64 = 1e-9;

/// Visit every pixel center covered by the projection of triangle `(a, b, c)`.
///
/// The callback gets the pixel, the perspective-correct barycentric weights
/// of the 3D point seen through that pixel, and its depth. Triangles with a
/// vertex at or behind the camera plane are skipped.
pub fn for_each_covered_pixel(
    tri: [&Vec3; 3],
    k: &CameraIntrinsics,
    (w, h): (usize, usize),
    mut visit: impl FnMut(usize, usize, [f64; 3], f64),
) {
    if tri.iter().any(|p| !(p.z > 0.0)) || w == 0 || h == 0 {
        return;
    }
    let s = tri.map(|p| project(p, k));
    let area = edge(s[0], s[1], s[2]);
    if area.abs() < 1e-12 {
        return;
    }
    let xmin = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let xmax = s.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).floor().min((w - 1) as f64);
    let ymin = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let ymax = s.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).floor().min((h - 1) as f64);
    if xmin > xmax || ymin > ymax {
        return;
    }
    let inv_z = tri.map(|p| 1.0 / p.z);
    for py in ymin as usize..=ymax as usize {
        for px in xmin as usize..=xmax as usize {
            let q = [px as f64, py as f64];
            let b = [
                edge(s[1], s[2], q) / area,
                edge(s[2], s[0], q) / area,
                edge(s[0], s[1], q) / area,
            ];
            if b.iter().any(|&x| x < -EDGE_EPS) {
                continue;
            }
            let pw = [b[0] * inv_z[0], b[1] * inv_z[1], b[2] * inv_z[2]];
            let sum = pw[0] + pw[1] + pw[2];
            let l = [pw[0] / sum, pw[1] / sum, pw[2] / sum];
            visit(px, py, l, 1.0 / sum);
        }
    }
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Nearest-surface buffer over a set of triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct ZBuffer {
    pub face: Raster<Option<usize>>,
    pub depth: Raster<f64>,
    pub lambdas: Raster<[f64; 3]>,
}

impl ZBuffer {
    /// Rasterize accepted triangles; the nearest surface wins, earlier faces
    /// win exact ties.
    pub fn build(
        vertices: &[Vec3],
        triangles: &[[usize; 3]],
        accept: impl Fn(usize) -> bool,
        k: &CameraIntrinsics,
        shape: (usize, usize),
    ) -> Self {
        let (w, h) = shape;
        let mut zb = Self {
            face: Raster::filled(w, h, None),
            depth: Raster::filled(w, h, f64::INFINITY),
            lambdas: Raster::filled(w, h, [0.0; 3]),
        };
        for (f, t) in triangles.iter().enumerate() {
            if !accept(f) {
                continue;
            }
            let tri = [&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]];
            for_each_covered_pixel(tri, k, shape, |u, v, l, z| {
                if z < *zb.depth.get(u, v) {
                    zb.depth.set(u, v, z);
                    zb.face.set(u, v, Some(f));
                    zb.lambdas.set(u, v, l);
                }
            });
        }
        zb
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unproject;

    #[test]
    fn covered_points_reproject_onto_pixel() {
        let k = CameraIntrinsics::from_fov90(32, 32);
        let a = unproject(3.0, 4.0, 2.0, &k);
        let b = unproject(28.0, 6.0, 3.0, &k);
        let c = unproject(10.0, 27.0, 2.5, &k);
        let mut n = 0;
        for_each_covered_pixel([&a, &b, &c], &k, (32, 32), |u, v, l, z| {
            let p = a * l[0] + b * l[1] + c * l[2];
            assert!((p.z - z).abs() < 1e-12);
            let q = project(&p, &k);
            assert!((q[0] - u as f64).abs() < 1e-9 && (q[1] - v as f64).abs() < 1e-9);
            n += 1;
        });
        assert!(n > 100);
    }

    #[test]
    fn nearer_triangle_wins() {
        let k = CameraIntrinsics::from_fov90(16, 16);
        let quad = |d: f64| {
            [
                unproject(0.0, 0.0, d, &k),
                unproject(15.0, 0.0, d, &k),
                unproject(0.0, 15.0, d, &k),
            ]
        };
        let mut verts = quad(3.0).to_vec();
        verts.extend(quad(1.0));
        let zb = ZBuffer::build(&verts, &[[0, 1, 2], [3, 4, 5]], |_| true, &k, (16, 16));
        assert_eq!(*zb.face.get(2, 2), Some(1));
        assert!((zb.depth.get(2, 2) - 1.0).abs() < 1e-12);
        assert_eq!(*zb.face.get(15, 15), None);
    }
}
