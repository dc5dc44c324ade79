//! Pinhole camera maps and per-triangle geometry.
//!
//! Camera space is right-handed with y up and z along the viewing ray, so a
//! pixel row index grows opposite to y.

use nalgebra::{Matrix2, Matrix2x3, Matrix3x2, Vector2};

use crate::error::{Error, Result};
use crate::io::CameraIntrinsics;

pub type Vec3 = nalgebra::Vector3<f64>;

/// Faces whose Gram matrix is worse conditioned than this are degenerate.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Lift pixel `(u, v)` at depth `d` into camera space.
#[inline]
pub fn unproject(u: f64, v: f64, d: f64, k: &CameraIntrinsics) -> Vec3 {
    Vec3::new((u - k.cx) / k.fx * d, -(v - k.cy) / k.fy * d, d)
}

/// Pinhole projection of a camera-space point to pixel coordinates.
#[inline]
pub fn project(p: &Vec3, k: &CameraIntrinsics) -> [f64; 2] {
    [k.fx * p.x / p.z + k.cx, -k.fy * p.y / p.z + k.cy]
}

/// Derivative of [`project`] with respect to the 3D position.
#[inline]
pub fn projection_jacobian(p: &Vec3, k: &CameraIntrinsics) -> Matrix2x3<f64> {
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * p.x * iz2,
        0.0,
        -k.fy * iz,
        k.fy * p.y * iz2,
    )
}

/// Image-space velocity (pixels/frame) of a point moving with `velocity`.
#[inline]
pub fn project_velocity(velocity: &Vec3, position: &Vec3, k: &CameraIntrinsics) -> [f64; 2] {
    let d = projection_jacobian(position, k) * velocity;
    [d.x, d.y]
}

/// Precomputed edge basis of a triangle `(a, b, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceGeometry {
    /// Columns `b - a` and `c - a`.
    pub edges: Matrix3x2<f64>,
    pub area: f64,
    pub normal: Vec3,
    pub centroid: Vec3,
    pub gram_inv: Matrix2<f64>,
    pub gram_condition: f64,
    /// Outward in-plane unit normal of local edge `k` (from vertex `k` to `k+1`).
    pub edge_normals: [Vec3; 3],
}

impl FaceGeometry {
    pub fn new(a: &Vec3, b: &Vec3, c: &Vec3) -> Self {
        let e1 = b - a;
        let e2 = c - a;
        let cross = e1.cross(&e2);
        let double_area = cross.norm();
        let normal = if double_area > 0.0 {
            cross / double_area
        } else {
            Vec3::zeros()
        };
        let gram = Matrix2::new(e1.dot(&e1), e1.dot(&e2), e1.dot(&e2), e2.dot(&e2));
        let gram_condition = symmetric_condition(&gram);
        let gram_inv = gram.try_inverse().unwrap_or_else(Matrix2::zeros);
        let pts = [a, b, c];
        let edge_normals = std::array::from_fn(|k| {
            let p = pts[k];
            let q = pts[(k + 1) % 3];
            let opp = pts[(k + 2) % 3];
            let dir = q - p;
            let mut n = dir.cross(&normal);
            let len = n.norm();
            if len > 0.0 {
                n /= len;
            }
            if n.dot(&(opp - p)) > 0.0 {
                n = -n;
            }
            n
        });
        Self {
            edges: Matrix3x2::from_columns(&[e1, e2]),
            area: 0.5 * double_area,
            normal,
            centroid: (a + b + c) / 3.0,
            gram_inv,
            gram_condition,
            edge_normals,
        }
    }

    pub fn is_degenerate(&self, min_area: f64) -> bool {
        !(self.area >= min_area) || !(self.gram_condition <= MAX_GRAM_CONDITION)
    }

    /// Least-squares edge coefficients `(mu, lambda)` with `E (mu, lambda) ~ rhs`.
    ///
    /// The component of `rhs` along the face normal is discarded.
    #[inline]
    pub fn basis_coefficients(&self, rhs: &Vec3) -> [f64; 2] {
        let m = self.gram_inv * (self.edges.transpose() * rhs);
        [m.x, m.y]
    }

    #[inline]
    pub fn from_coefficients(&self, coeffs: [f64; 2]) -> Vec3 {
        self.edges * Vector2::new(coeffs[0], coeffs[1])
    }

    /// Remove the normal component of `v`.
    #[inline]
    pub fn tangential(&self, v: &Vec3) -> Vec3 {
        v - self.normal * self.normal.dot(v)
    }

    /// Gradients of the three barycentric hat functions over the face.
    pub fn hat_gradients(&self) -> [Vec3; 3] {
        let gb = self.from_coefficients([self.gram_inv[(0, 0)], self.gram_inv[(1, 0)]]);
        let gc = self.from_coefficients([self.gram_inv[(0, 1)], self.gram_inv[(1, 1)]]);
        [-(gb + gc), gb, gc]
    }
}

/// `lambda_max / lambda_min` of a symmetric 2x2 matrix.
pub fn symmetric_condition(m: &Matrix2<f64>) -> f64 {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let hi = 0.5 * tr + disc;
    let lo = 0.5 * tr - disc;
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Condition number (ratio of singular values) of a general 2x2 matrix.
pub fn matrix2_condition(m: &Matrix2<f64>) -> f64 {
    symmetric_condition(&(m.transpose() * m)).sqrt()
}

/// Solve `E (mu, lambda) = rhs` for a face, rejecting ill-conditioned bases.
pub fn triangle_basis_solve(face: usize, geom: &FaceGeometry, rhs: &Vec3) -> Result<[f64; 2]> {
    if !(geom.gram_condition <= MAX_GRAM_CONDITION) {
        return Err(Error::DegenerateTriangle(face));
    }
    Ok(geom.basis_coefficients(rhs))
}

/// Closest point to `p` on triangle `(a, b, c)`.
///
/// Returns the point and its barycentric weights (summing to one, all
/// non-negative). Region classification after Ericson, *Real-Time Collision
/// Detection*, 5.1.5.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return (a + ab * t, [1.0 - t, t, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return (a + ac * t, [1.0 - t, 0.0, t]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * t, [0.0, 1.0 - t, t]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 200.0,
            fy: 180.0,
            cx: 64.0,
            cy: 48.0,
        }
    }

    #[test]
    fn principal_point_maps_to_axis() {
        let k = k();
        assert_eq!(unproject(k.cx, k.cy, 2.0, &k), Vec3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn unit_focal_offset() {
        let k = k();
        assert_eq!(unproject(k.cx + k.fx, k.cy, 1.0, &k), Vec3::new(1.0, 0.0, 1.0));
    }

    proptest! {
        #[test]
        fn unproject_inverts_pinhole(u in 0.0f64..128.0, v in 0.0f64..96.0, d in 0.1f64..50.0) {
            let k = k();
            let p = unproject(u, v, d, &k);
            // forward pinhole written out independently of `project`
            let uu = k.fx * p.x / p.z + k.cx;
            let vv = k.cy - k.fy * p.y / p.z;
            prop_assert!((uu - u).abs() < 1e-9 && (vv - v).abs() < 1e-9);
            prop_assert!((p.z - d).abs() < 1e-12);
        }

        #[test]
        fn basis_solve_reconstructs_in_plane(
            pts in prop::array::uniform9(-3.0f64..3.0),
            s in -5.0f64..5.0, t in -5.0f64..5.0,
        ) {
            let a = Vec3::new(pts[0], pts[1], pts[2]);
            let b = Vec3::new(pts[3], pts[4], pts[5]);
            let c = Vec3::new(pts[6], pts[7], pts[8]);
            let g = FaceGeometry::new(&a, &b, &c);
            prop_assume!(g.area > 1e-2 && g.gram_condition < 1e6);
            let w = (b - a) * s + (c - a) * t;
            let coeffs = triangle_basis_solve(0, &g, &w).unwrap();
            let back = g.from_coefficients(coeffs);
            prop_assert!((back - w).norm() <= 1e-9 * w.norm().max(1.0));
        }
    }

    #[test]
    fn basis_of_edge_and_zero() {
        let a = Vec3::new(0.0, 0.0, 1.0);
        let b = Vec3::new(1.0, 0.5, 1.2);
        let c = Vec3::new(-0.3, 1.0, 0.9);
        let g = FaceGeometry::new(&a, &b, &c);
        let m = triangle_basis_solve(0, &g, &(b - a)).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12 && m[1].abs() < 1e-12);
        assert_eq!(triangle_basis_solve(0, &g, &Vec3::zeros()).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn collinear_triangle_is_degenerate() {
        let a = Vec3::new(0.0, 0.0, 1.0);
        let b = Vec3::new(1.0, 0.0, 1.0);
        let c = Vec3::new(2.0, 0.0, 1.0);
        let g = FaceGeometry::new(&a, &b, &c);
        assert!(g.is_degenerate(1e-12));
        assert!(matches!(
            triangle_basis_solve(7, &g, &(b - a)),
            Err(Error::DegenerateTriangle(7))
        ));
    }

    #[test]
    fn hat_gradients_reproduce_unit_differences() {
        let a = Vec3::new(0.1, 0.0, 1.0);
        let b = Vec3::new(1.0, 0.2, 1.5);
        let c = Vec3::new(0.0, 1.0, 0.8);
        let g = FaceGeometry::new(&a, &b, &c);
        let grads = g.hat_gradients();
        let pts = [a, b, c];
        for i in 0..3 {
            for j in 0..3 {
                // phi_i(p_j) - phi_i(p_0)
                let want = (i == j) as i32 as f64 - (i == 0) as i32 as f64;
                assert!((grads[i].dot(&(pts[j] - a)) - want).abs() < 1e-12);
            }
            assert!(grads[i].dot(&g.normal).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_normals_point_outward() {
        let a = Vec3::new(0.0, 0.0, 1.0);
        let b = Vec3::new(1.0, 0.0, 1.0);
        let c = Vec3::new(0.0, 1.0, 1.0);
        let g = FaceGeometry::new(&a, &b, &c);
        assert!((g.edge_normals[0] - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        assert!((g.edge_normals[2] - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        let s = 0.5f64.sqrt();
        assert!((g.edge_normals[1] - Vec3::new(s, s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn projection_jacobian_matches_finite_differences() {
        let k = k();
        let p = Vec3::new(0.3, -0.2, 2.5);
        let j = projection_jacobian(&p, &k);
        let h = 1e-6;
        for axis in 0..3 {
            let mut dp = Vec3::zeros();
            dp[axis] = h;
            let hi = project(&(p + dp), &k);
            let lo = project(&(p - dp), &k);
            for r in 0..2 {
                let fd = (hi[r] - lo[r]) / (2.0 * h);
                assert!((fd - j[(r, axis)]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn radial_motion_is_invisible() {
        let k = k();
        let p = Vec3::new(0.4, 0.7, 3.0);
        let d = project_velocity(&(p * 0.25), &p, &k);
        assert!(d[0].abs() < 1e-12 && d[1].abs() < 1e-12);
    }

    #[test]
    fn axis_velocity() {
        let k = k();
        let p = Vec3::new(0.0, 0.0, 4.0);
        let d = project_velocity(&Vec3::new(0.5, 0.0, 0.0), &p, &k);
        assert_eq!(d, [k.fx * 0.5 / 4.0, 0.0]);
        assert_eq!(project_velocity(&Vec3::zeros(), &p, &k), [0.0, 0.0]);
    }
}
