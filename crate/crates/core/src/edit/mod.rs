//! Inserting solid objects: occlusion against the water surface, mesh
//! cutting, and layer updates.

mod primitives;

pub use primitives::TriMesh;

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{Isometry3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{CameraIntrinsics, SceneBundle};
use crate::mesh::{for_each_covered_pixel, project, unproject, SurfaceMesh, Vec3, ZBuffer};
use crate::raster::{Mask, Raster};
use crate::render::LayerStack;
use crate::sim::SimState;

/// Depth bias toward the object when comparing with the water surface.
pub const OCCLUSION_BIAS: f64 = 1e-4;

/// A rigidly placed solid.
#[derive(Clone, Debug, PartialEq)]
pub struct InsertedObject {
    /// Object-space geometry.
    pub mesh: TriMesh,
    pub pose: Isometry3<f64>,
    /// Base RGBA color, shaded by facing ratio when drawn.
    pub color: [f32; 4],
}

impl InsertedObject {
    pub fn new(mesh: TriMesh, pose: Isometry3<f64>, color: [f32; 4]) -> Self {
        Self { mesh, pose, color }
    }

    /// Vertices in camera coordinates.
    pub fn world_vertices(&self) -> Vec<Vec3> {
        self.mesh
            .vertices
            .iter()
            .map(|v| self.pose.transform_point(&(*v).into()).coords)
            .collect()
    }
}

/// Which primitive to place.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    Obj { text: String, scale: f64 },
}

/// Pixel-anchored placement: the object is centered on the scene surface
/// under pixel `at`, offset along the view ray by `depth_offset` meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    #[serde(flatten)]
    pub primitive: Primitive,
    pub at: [f64; 2],
    #[serde(default)]
    pub depth_offset: f64,
    #[serde(default = "default_color")]
    pub color: [f32; 4],
}

fn default_color() -> [f32; 4] {
    [0.42, 0.38, 0.34, 1.0]
}

impl ObjectSpec {
    pub fn sphere(at: [f64; 2], radius: f64) -> Self {
        Self {
            primitive: Primitive::Sphere { radius },
            at,
            depth_offset: 0.0,
            color: default_color(),
        }
    }

    pub fn place(&self, scene: &SceneBundle) -> Result<InsertedObject> {
        let (w, h) = scene.dims();
        let [u, v] = self.at;
        if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
            return Err(Error::ObjectOutOfFrame);
        }
        let d = scene.depth.sample_bilinear(u, v) + self.depth_offset;
        if !(d > 0.0) {
            return Err(Error::InvalidInput("object would sit behind the camera".into()));
        }
        let mesh = match &self.primitive {
            Primitive::Sphere { radius } if *radius > 0.0 => TriMesh::sphere(*radius, 24, 48),
            Primitive::Box { half_extents: e } if e.iter().all(|&x| x > 0.0) => {
                TriMesh::cuboid(Vec3::new(e[0], e[1], e[2]))
            }
            Primitive::Obj { text, scale } if *scale > 0.0 => {
                let mut m = TriMesh::from_obj(text)?;
                m.vertices.iter_mut().for_each(|p| *p *= *scale);
                m
            }
            _ => return Err(Error::InvalidInput("object size must be positive".into())),
        };
        let c = unproject(u, v, d, &scene.intrinsics);
        let pose = Isometry3::from_parts(Translation3::from(c), UnitQuaternion::identity());
        Ok(InsertedObject::new(mesh, pose, self.color))
    }
}

/// Result of comparing the object with the water surface.
#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionSplit {
    /// Object pixels in front of the surface.
    pub above_mask: Mask,
    /// Object pixels behind the surface.
    pub below_mask: Mask,
    /// Fluid faces the object passes through.
    pub contact_faces: BTreeSet<usize>,
    /// Shaded object color where it projects.
    pub color: Raster<Option<[f32; 4]>>,
}

impl OcclusionSplit {
    pub fn silhouette(&self) -> Mask {
        Raster::from_fn(self.above_mask.width(), self.above_mask.height(), |u, v| {
            *self.above_mask.get(u, v) || *self.below_mask.get(u, v)
        })
    }
}

/// Per-pixel nearest and farthest object depth.
fn depth_span(vertices: &[Vec3], triangles: &[[usize; 3]], k: &CameraIntrinsics, shape: (usize, usize)) -> Raster<Option<(f64, f64)>> {
    let mut span: Raster<Option<(f64, f64)>> = Raster::filled(shape.0, shape.1, None);
    for t in triangles {
        let tri = [&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]];
        for_each_covered_pixel(tri, k, shape, |u, v, _, z| {
            let s = span.get_mut(u, v);
            *s = Some(match *s {
                None => (z, z),
                Some((a, b)) => (a.min(z), b.max(z)),
            });
        });
    }
    span
}

/// Z-buffer the object against the surface mesh.
///
/// A pixel is above when the object's nearest depth is within
/// [`OCCLUSION_BIAS`] of the surface or nearer. A fluid face is in contact
/// when the surface seen through one of its pixels, or its centroid, lies
/// inside the object's depth span there.
pub fn classify_occlusion(
    object: &InsertedObject,
    mesh: &SurfaceMesh,
    k: &CameraIntrinsics,
    shape: (usize, usize),
) -> Result<OcclusionSplit> {
    let (w, h) = shape;
    let verts = object.world_vertices();
    let tris = &object.mesh.triangles;
    let obj = ZBuffer::build(&verts, tris, |_| true, k, shape);
    if obj.face.data().iter().all(Option::is_none) {
        return Err(Error::ObjectOutOfFrame);
    }
    let span = depth_span(&verts, tris, k, shape);
    let surf = ZBuffer::build(&mesh.vertices, &mesh.triangles, |_| true, k, shape);
    let mut above = Raster::filled(w, h, false);
    let mut below = Raster::filled(w, h, false);
    let mut contact = BTreeSet::new();
    let inside = |s: Option<(f64, f64)>, z: f64| {
        s.is_some_and(|(a, b)| z >= a - OCCLUSION_BIAS && z <= b + OCCLUSION_BIAS)
    };
    for v in 0..h {
        for u in 0..w {
            if obj.face.get(u, v).is_none() {
                continue;
            }
            let zo = *obj.depth.get(u, v);
            let zs = *surf.depth.get(u, v);
            if zo <= zs + OCCLUSION_BIAS {
                above.set(u, v, true);
            } else {
                below.set(u, v, true);
            }
            if let Some(f) = *surf.face.get(u, v) {
                if mesh.is_fluid_face(f) && inside(*span.get(u, v), zs) {
                    contact.insert(f);
                }
            }
        }
    }
    for f in mesh.fluid_faces() {
        let c = mesh.faces[f].centroid;
        let p = project(&c, k);
        let (u, v) = (p[0].round(), p[1].round());
        if u >= 0.0 && v >= 0.0 && (u as usize) < w && (v as usize) < h {
            if inside(*span.get(u as usize, v as usize), c.z) {
                contact.insert(f);
            }
        }
    }
    let base = object.color;
    let color = Raster::from_fn(w, h, |u, v| {
        obj.face.get(u, v).map(|f| {
            let [a, b, c] = tris[f].map(|i| verts[i]);
            let n = (b - a).cross(&(c - a)).normalize();
            let ray = unproject(u as f64, v as f64, 1.0, k).normalize();
            let shade = (0.35 + 0.65 * n.dot(&ray).abs()) as f32;
            [base[0] * shade, base[1] * shade, base[2] * shade, base[3]]
        })
    });
    Ok(OcclusionSplit {
        above_mask: above,
        below_mask: below,
        contact_faces: contact,
        color,
    })
}

/// Relabel `contact` faces SOLID. An empty set returns an identical mesh.
pub fn cut_mesh(mesh: &SurfaceMesh, contact: &BTreeSet<usize>) -> SurfaceMesh {
    mesh.cut(contact)
}

/// Draw the object into the layers: pixels above the surface go to the
/// front of the fluid layer and stay static; pixels below go to the
/// background wherever water could show them.
pub fn draw_object(layers: &LayerStack, split: &OcclusionSplit) -> LayerStack {
    let mut out = layers.clone();
    let (w, h) = layers.dims();
    let bg_channels = out.background.channels();
    for v in 0..h {
        for u in 0..w {
            let Some(c) = *split.color.get(u, v) else { continue };
            if *split.above_mask.get(u, v) {
                let px = [c[0], c[1], c[2], 1.0];
                out.fluid_t0.pixel_mut(u, v).copy_from_slice(&px);
                if let Some(tn) = out.fluid_tn.as_mut() {
                    tn.pixel_mut(u, v).copy_from_slice(&px);
                }
                out.pinned.set(u, v, true);
            } else if *split.below_mask.get(u, v) && layers.fluid_t0.pixel(u, v)[3] > 0.0 {
                out.background.pixel_mut(u, v)[..3].copy_from_slice(&c[..3]);
                if bg_channels > 3 {
                    out.background.pixel_mut(u, v)[3] = 1.0;
                }
            }
        }
    }
    out
}

/// Everything an edit produces.
#[derive(Clone, Debug)]
pub struct EditOutcome {
    pub mesh: Arc<SurfaceMesh>,
    pub layers: LayerStack,
    pub state: SimState,
    pub split: OcclusionSplit,
}

/// Insert `object`: classify, cut, redraw layers, and move the simulation
/// onto the cut mesh keeping surviving particles.
pub fn apply_edit(
    scene: &SceneBundle,
    layers: &LayerStack,
    object: &InsertedObject,
    state: &SimState,
) -> Result<EditOutcome> {
    let split = classify_occlusion(object, &state.mesh, &scene.intrinsics, scene.dims())?;
    let mesh = Arc::new(cut_mesh(&state.mesh, &split.contact_faces));
    let state = state.remesh(Arc::clone(&mesh))?;
    Ok(EditOutcome {
        layers: draw_object(layers, &split),
        mesh,
        state,
        split,
    })
}

/// Undo the mesh side of an edit.
pub fn remove_edit(mesh: &SurfaceMesh, split: &OcclusionSplit) -> SurfaceMesh {
    mesh.uncut(&split.contact_faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshParams};
    use crate::synthetic;

    fn setup(w: usize, h: usize) -> (SceneBundle, SurfaceMesh) {
        let scene = synthetic::slanted_plane(w, h).unwrap();
        let mesh = build_mesh(&scene.depth, &scene.fluid_mask, &scene.intrinsics, &MeshParams::with_stride(2)).unwrap();
        (scene, mesh)
    }

    fn sphere_at(c: Vec3, r: f64) -> InsertedObject {
        let pose = Isometry3::from_parts(Translation3::from(c), UnitQuaternion::identity());
        InsertedObject::new(TriMesh::sphere(r, 32, 64), pose, [1.0; 4])
    }

    #[test]
    fn near_object_is_all_above() {
        let (scene, mesh) = setup(64, 48);
        let obj = sphere_at(Vec3::new(0.0, 0.0, 1.5), 0.2);
        let s = classify_occlusion(&obj, &mesh, &scene.intrinsics, scene.dims()).unwrap();
        assert!(s.above_mask.any());
        assert!(!s.below_mask.any());
        assert!(s.contact_faces.is_empty());
    }

    #[test]
    fn far_object_is_all_below() {
        let (scene, mesh) = setup(64, 48);
        let obj = sphere_at(Vec3::new(0.0, 0.0, 40.0), 1.0);
        let s = classify_occlusion(&obj, &mesh, &scene.intrinsics, scene.dims()).unwrap();
        assert!(!s.above_mask.any());
        assert!(s.below_mask.any());
    }

    #[test]
    fn object_behind_camera_is_out_of_frame() {
        let (scene, mesh) = setup(32, 24);
        let obj = sphere_at(Vec3::new(0.0, 0.0, -5.0), 1.0);
        let r = classify_occlusion(&obj, &mesh, &scene.intrinsics, scene.dims());
        assert!(matches!(r, Err(Error::ObjectOutOfFrame)));
        let spec = ObjectSpec::sphere([-3.0, 2.0], 0.5);
        assert!(matches!(spec.place(&scene), Err(Error::ObjectOutOfFrame)));
    }

    #[test]
    fn half_submerged_sphere_splits_at_the_waterline() {
        let (w, h) = (160, 120);
        let (scene, mesh) = setup(w, h);
        let k = scene.intrinsics;
        // the slanted scene is the plane z = 5 + 0.5 y
        let (z0, tilt) = (5.0, 0.5);
        let center = unproject(80.0, 66.0, scene.depth.sample_bilinear(80.0, 66.0), &k);
        assert!((center.z - z0 - tilt * center.y).abs() < 1e-9);
        let r = 0.6;
        let s = classify_occlusion(&sphere_at(center, r), &mesh, &k, (w, h)).unwrap();
        // analytic first hit of the sphere versus the plane along each ray
        let truth = |u: usize, v: usize| -> Option<bool> {
            let d = unproject(u as f64, v as f64, 1.0, &k);
            let (a, b, c) = (d.dot(&d), -2.0 * d.dot(&center), center.dot(&center) - r * r);
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let t_sphere = (-b - disc.sqrt()) / (2.0 * a);
            let t_plane = z0 / (d.z - tilt * d.y);
            Some(t_sphere <= t_plane)
        };
        let mut checked = 0;
        for v in 0..h {
            for u in 0..w {
                let (Some(want), true) = (truth(u, v), *s.above_mask.get(u, v) || *s.below_mask.get(u, v)) else {
                    continue;
                };
                checked += 1;
                if *s.above_mask.get(u, v) == want {
                    continue;
                }
                let near_boundary = (v.saturating_sub(1)..=(v + 1).min(h - 1)).any(|y| {
                    (u.saturating_sub(1)..=(u + 1).min(w - 1)).any(|x| truth(x, y) == Some(!want))
                });
                assert!(near_boundary, "pixel {u},{v} misclassified away from the waterline");
            }
        }
        assert!(checked > 100);
        assert!(s.above_mask.any() && s.below_mask.any());
        assert!(!s.contact_faces.is_empty());
    }

    #[test]
    fn empty_cut_is_identity_and_cut_is_idempotent() {
        let (scene, mesh) = setup(48, 36);
        assert_eq!(cut_mesh(&mesh, &BTreeSet::new()).face_flags, mesh.face_flags);
        let c = scene.intrinsics;
        let center = unproject(24.0, 18.0, *scene.depth.get(24, 18), &c);
        let s = classify_occlusion(&sphere_at(center, 0.4), &mesh, &c, scene.dims()).unwrap();
        let once = cut_mesh(&mesh, &s.contact_faces);
        let twice = cut_mesh(&once, &s.contact_faces);
        assert_eq!(once.face_flags, twice.face_flags);
        assert_eq!(once.boundary_edges, twice.boundary_edges);
        assert_eq!(once.vertices, mesh.vertices);
        assert_eq!(remove_edit(&once, &s).face_flags, mesh.face_flags);
    }

    #[test]
    fn box_and_obj_primitives_place() {
        let (scene, _) = setup(48, 36);
        let b = ObjectSpec {
            primitive: Primitive::Box { half_extents: [0.2, 0.3, 0.2] },
            at: [20.0, 20.0],
            depth_offset: 0.0,
            color: default_color(),
        };
        assert_eq!(b.place(&scene).unwrap().mesh.triangles.len(), 12);
        let tet = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n";
        let o = ObjectSpec {
            primitive: Primitive::Obj { text: tet.into(), scale: 0.5 },
            ..b.clone()
        };
        let placed = o.place(&scene).unwrap();
        assert!((placed.mesh.vertices[1].x - 0.5).abs() < 1e-12);
        let json = serde_json::to_string(&ObjectSpec::sphere([3.0, 4.0], 0.5)).unwrap();
        let back: ObjectSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ObjectSpec::sphere([3.0, 4.0], 0.5));
    }
}
