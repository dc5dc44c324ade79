//! Discrete divergence and gradient on the triangle mesh.
//!
//! A face velocity `w = mu (x_b - x_a) + lambda (x_c - x_a)` contributes
//! `(mu + lambda) / S` to vertex `a`. Re-expressing `w` in the edges leaving
//! `b` or `c` gives `-mu / S` and `-lambda / S` for the other two corners,
//! which is what [`vertex_divergence`] gathers.

use crate::error::{Error, Result};
use crate::lift::FaceVelocityField;
use crate::mesh::{SurfaceMesh, Vec3, MIN_FACE_AREA};

/// Per-corner divergence contributions of one face.
#[inline]
pub fn face_divergence_terms(coeffs: [f64; 2], area: f64) -> [f64; 3] {
    let [mu, lambda] = coeffs;
    [(mu + lambda) / area, -mu / area, -lambda / area]
}

/// Divergence at every vertex, summed over incident fluid faces.
///
/// Vertices with no fluid face get zero.
pub fn vertex_divergence(faces: &FaceVelocityField, mesh: &SurfaceMesh) -> Vec<f64> {
    (0..mesh.num_vertices())
        .map(|v| {
            let mut div = 0.0;
            for &f in &mesh.vertex_faces[v] {
                if !mesh.is_fluid_face(f) {
                    continue;
                }
                let t = mesh.triangles[f];
                let corner = t.iter().position(|&x| x == v).expect("adjacency");
                div += face_divergence_terms(faces.coeffs[f], mesh.faces[f].area)[corner];
            }
            div
        })
        .collect()
}

/// In-plane gradient of a piecewise-linear vertex field on one face.
///
/// Solves `G (mu, lambda) = (p_b - p_a, p_c - p_a)` with `G = E^T E` and
/// returns `E (mu, lambda)`.
#[inline]
pub fn face_gradient_at(mesh: &SurfaceMesh, f: usize, p: &[f64]) -> Vec3 {
    let [a, b, c] = mesh.triangles[f];
    let g = &mesh.faces[f];
    let d = nalgebra::Vector2::new(p[b] - p[a], p[c] - p[a]);
    let m = g.gram_inv * d;
    g.from_coefficients([m.x, m.y])
}

/// Gradient on every face.
pub fn face_gradient(p: &[f64], mesh: &SurfaceMesh) -> Result<Vec<Vec3>> {
    if p.len() != mesh.num_vertices() {
        return Err(Error::InvalidInput(format!(
            "pressure has {} values for {} vertices",
            p.len(),
            mesh.num_vertices()
        )));
    }
    (0..mesh.num_faces())
        .map(|f| {
            if mesh.faces[f].is_degenerate(MIN_FACE_AREA) {
                Err(Error::DegenerateTriangle(f))
            } else {
                Ok(face_gradient_at(mesh, f, p))
            }
        })
        .collect()
}
