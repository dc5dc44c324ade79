//! Lifting image-space motion onto mesh faces and projecting it back.

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::field::MotionField;
use crate::io::CameraIntrinsics;
use crate::mesh::geometry::matrix2_condition;
use crate::mesh::{project, project_velocity, projection_jacobian, SurfaceMesh, Vec3, ZBuffer};
use crate::raster::Raster;

/// Faces whose projected edge basis is worse conditioned than this are
/// treated as edge-on to the camera.
pub const MAX_LIFT_CONDITION: f64 = 1e10;

/// One tangential 3D velocity per face with its edge coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceVelocityField {
    pub w: Vec<Vec3>,
    /// `(mu, lambda)` with `w = E (mu, lambda)`.
    pub coeffs: Vec<[f64; 2]>,
    /// Faces zeroed because the lift was singular.
    pub singular: Vec<bool>,
}

impl FaceVelocityField {
    pub fn zeros(faces: usize) -> Self {
        Self {
            w: vec![Vec3::zeros(); faces],
            coeffs: vec![[0.0; 2]; faces],
            singular: vec![false; faces],
        }
    }

    /// Project each velocity onto its face plane and record coefficients.
    pub fn from_velocities(mesh: &SurfaceMesh, w: Vec<Vec3>) -> Self {
        let coeffs: Vec<[f64; 2]> = w
            .iter()
            .zip(&mesh.faces)
            .map(|(v, g)| g.basis_coefficients(v))
            .collect();
        let w = coeffs
            .iter()
            .zip(&mesh.faces)
            .map(|(c, g)| g.from_coefficients(*c))
            .collect();
        Self {
            singular: vec![false; coeffs.len()],
            w,
            coeffs,
        }
    }

    /// Like [`from_velocities`](Self::from_velocities) with an arbitrary
    /// per-face closure.
    pub fn from_fn(mesh: &SurfaceMesh, f: impl FnMut(usize) -> Vec3) -> Self {
        Self::from_velocities(mesh, (0..mesh.num_faces()).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            w: self.w.iter().map(|v| v * s).collect(),
            coeffs: self.coeffs.iter().map(|c| [c[0] * s, c[1] * s]).collect(),
            singular: self.singular.clone(),
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.w.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Lift a single face: velocity whose projection at the centroid equals
/// `flow`. Returns `None` when the face is edge-on.
pub fn lift_face(
    mesh: &SurfaceMesh,
    f: usize,
    flow: [f64; 2],
    k: &CameraIntrinsics,
) -> Option<([f64; 2], Vec3)> {
    let g = &mesh.faces[f];
    let a = projection_jacobian(&g.centroid, k) * g.edges;
    if !(matrix2_condition(&a) <= MAX_LIFT_CONDITION) {
        return None;
    }
    let m = a.lu().solve(&Vector2::new(flow[0], flow[1]))?;
    let c = [m.x, m.y];
    Some((c, g.from_coefficients(c)))
}

/// Per-face 3D velocities reproducing the image flow at projected centroids.
pub fn lift_flow(field: &MotionField, mesh: &SurfaceMesh, k: &CameraIntrinsics) -> FaceVelocityField {
    let out: Vec<Option<([f64; 2], Vec3)>> = (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| {
            let p = project(&mesh.faces[f].centroid, k);
            lift_face(mesh, f, field.sample(p[0], p[1]), k)
        })
        .collect();
    let mut faces = FaceVelocityField::zeros(mesh.num_faces());
    for (f, r) in out.into_iter().enumerate() {
        match r {
            Some((c, w)) => {
                faces.coeffs[f] = c;
                faces.w[f] = w;
            }
            None => faces.singular[f] = true,
        }
    }
    faces
}

/// Per-vertex velocity: area-weighted mean over incident fluid faces.
pub fn vertex_velocities(faces: &FaceVelocityField, mesh: &SurfaceMesh) -> Vec<Vec3> {
    (0..mesh.num_vertices())
        .map(|v| {
            let mut acc = Vec3::zeros();
            let mut wsum = 0.0;
            for &f in &mesh.vertex_faces[v] {
                if mesh.is_fluid_face(f) {
                    acc += faces.w[f] * mesh.faces[f].area;
                    wsum += mesh.faces[f].area;
                }
            }
            if wsum > 0.0 {
                acc / wsum
            } else {
                acc
            }
        })
        .collect()
}

/// Dense image motion from face velocities.
///
/// Fluid faces interpolate vertex velocities; solid faces carry zero motion
/// but still occlude. Pixels no face covers are invalid.
pub fn rasterize_surface_motion(
    faces: &FaceVelocityField,
    mesh: &SurfaceMesh,
    k: &CameraIntrinsics,
    shape: (usize, usize),
) -> MotionField {
    let (w, h) = shape;
    let zb = ZBuffer::build(&mesh.vertices, &mesh.triangles, |_| true, k, shape);
    let vv = vertex_velocities(faces, mesh);
    let mut data = Raster::filled(w, h, [0.0; 2]);
    let mut valid = Raster::filled(w, h, false);
    for v in 0..h {
        for u in 0..w {
            let Some(f) = *zb.face.get(u, v) else {
                continue;
            };
            valid.set(u, v, true);
            if !mesh.is_fluid_face(f) {
                continue;
            }
            let l = *zb.lambdas.get(u, v);
            let t = mesh.triangles[f];
            let vel = vv[t[0]] * l[0] + vv[t[1]] * l[1] + vv[t[2]] * l[2];
            let pos = mesh.point_at(f, l);
            data.set(u, v, project_velocity(&vel, &pos, k));
        }
    }
    MotionField { data, valid }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, CellKind, FaceGeometry, MeshParams};
    use proptest::prelude::*;

    fn flat(w: usize, h: usize, z: f64, stride: usize) -> (SurfaceMesh, CameraIntrinsics) {
        let k = CameraIntrinsics::from_fov90(w, h);
        let m = build_mesh(
            &Raster::filled(w, h, z),
            &Raster::filled(w, h, true),
            &k,
            &MeshParams::with_stride(stride),
        )
        .unwrap();
        (m, k)
    }

    #[test]
    fn fronto_parallel_closed_form() {
        let (m, k) = flat(32, 24, 2.5, 4);
        let du = 1.7;
        let faces = lift_flow(&MotionField::constant(32, 24, [du, 0.0]), &m, &k);
        for w in &faces.w {
            assert!((w - Vec3::new(du * 2.5 / k.fx, 0.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_flow_lifts_to_zero() {
        let (m, k) = flat(16, 16, 1.0, 2);
        let faces = lift_flow(&MotionField::zeros(16, 16), &m, &k);
        assert!(faces.w.iter().all(|w| *w == Vec3::zeros()));
        assert!(faces.singular.iter().all(|s| !s));
    }

    #[test]
    fn edge_on_face_is_flagged() {
        let k = CameraIntrinsics::from_fov90(16, 16);
        // face containing the viewing ray through its centroid
        let a = Vec3::new(0.0, 0.0, 1.0);
        let b = Vec3::new(0.0, 0.0, 2.0);
        let c = Vec3::new(0.0, 1.0, 1.5);
        let m = SurfaceMesh::from_triangles(vec![a, b, c], vec![[0, 1, 2]], vec![CellKind::Fluid])
            .unwrap();
        let faces = lift_flow(&MotionField::constant(16, 16, [1.0, 1.0]), &m, &k);
        assert!(faces.singular[0]);
        assert_eq!(faces.w[0], Vec3::zeros());
    }

    proptest! {
        #[test]
        fn lift_round_trips_through_projection(
            pts in prop::array::uniform9(-1.0f64..1.0),
            du in -5.0f64..5.0, dv in -5.0f64..5.0, s in -3.0f64..3.0,
        ) {
            let k = CameraIntrinsics::from_fov90(64, 48);
            let a = Vec3::new(pts[0], pts[1], 3.0 + pts[2]);
            let b = Vec3::new(pts[3], pts[4], 3.0 + pts[5]);
            let c = Vec3::new(pts[6], pts[7], 3.0 + pts[8]);
            let g = FaceGeometry::new(&a, &b, &c);
            prop_assume!(g.area > 1e-2 && g.gram_condition < 1e6);
            let m = SurfaceMesh::from_triangles(vec![a, b, c], vec![[0, 1, 2]], vec![CellKind::Fluid]).unwrap();
            let lifted = lift_face(&m, 0, [du, dv], &k);
            prop_assume!(lifted.is_some());
            let (_, w) = lifted.unwrap();
            let back = project_velocity(&w, &g.centroid, &k);
            let scale = du.hypot(dv).max(1e-12);
            prop_assert!((back[0] - du).hypot(back[1] - dv) <= 1e-6 * scale);
            prop_assert!(w.dot(&g.normal).abs() <= 1e-9 * w.norm().max(1e-300));
            // linear in the flow
            let (_, ws) = lift_face(&m, 0, [s * du, s * dv], &k).unwrap();
            prop_assert!((ws - w * s).norm() <= 1e-9 * (w.norm() * s.abs()).max(1e-12));
        }
    }

    #[test]
    fn uniform_velocity_rasterizes_to_constant_flow() {
        let (m, k) = flat(40, 30, 2.0, 4);
        let w = Vec3::new(0.05, -0.02, 0.0);
        let faces = FaceVelocityField::from_fn(&m, |_| w);
        let field = rasterize_surface_motion(&faces, &m, &k, (40, 30));
        let want = [k.fx * w.x / 2.0, -k.fy * w.y / 2.0];
        // covered region is the vertex grid's extent
        for v in 0..=28 {
            for u in 0..=36 {
                assert!(*field.valid.get(u, v));
                let p = field.get(u, v);
                assert!((p[0] - want[0]).abs() < 1e-9 && (p[1] - want[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_velocity_rasterizes_to_zero() {
        let (m, k) = flat(20, 20, 1.0, 2);
        let field = rasterize_surface_motion(&FaceVelocityField::zeros(m.num_faces()), &m, &k, (20, 20));
        assert!(field.data.data().iter().all(|p| *p == [0.0, 0.0]));
    }

    #[test]
    fn smooth_flow_round_trip() {
        let (w, h) = (96, 80);
        let k = CameraIntrinsics::from_fov90(w, h);
        let depth = Raster::from_fn(w, h, |u, v| 2.0 + 0.004 * u as f64 + 0.002 * v as f64);
        let m = build_mesh(&depth, &Raster::filled(w, h, true), &k, &MeshParams::with_stride(2)).unwrap();
        let flow = MotionField::from_fn(w, h, |u, v| {
            let (x, y) = (u as f64 / w as f64, v as f64 / h as f64);
            [1.5 + 0.8 * (3.0 * y).sin(), 0.6 * (2.0 * x).cos()]
        });
        let faces = lift_flow(&flow, &m, &k);
        let back = rasterize_surface_motion(&faces, &m, &k, (w, h));
        let mut worst: f64 = 0.0;
        for v in 4..h - 4 {
            for u in 4..w - 4 {
                let a = back.get(u, v);
                let b = flow.get(u, v);
                worst = worst.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        assert!(worst <= 0.1, "worst round-trip error {worst}");
    }
}
