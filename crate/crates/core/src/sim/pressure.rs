//! Pressure Poisson system on the mesh and its conjugate-gradient solve.
//!
//! The operator is the composition of the face gradient, the per-face wall
//! projector, and the vertex divergence, so a solved pressure removes exactly
//! the divergence that [`vertex_divergence`](super::vertex_divergence)
//! measures. Its negation is symmetric positive definite once free-surface
//! vertices are fixed to zero.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mesh::SurfaceMesh;

/// Stopping rule and iteration cap for the solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    /// Stop once `max |r| <= tol * max |b|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 2000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `max |r| / max |b|` (zero for a zero right-hand side).
    pub residual: f64,
    pub converged: bool,
}

/// Per-vertex pressure; zero on free-surface and non-fluid vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureField {
    pub p: Vec<f64>,
}

/// Vertices sharing fluid faces with no free-surface vertex among them.
#[derive(Clone, Debug, PartialEq)]
struct ClosedComponent {
    /// Unknown indices in the component, pinned vertex excluded.
    unknowns: Vec<usize>,
    /// Vertices whose divergence enters the compatibility condition.
    vertices: Vec<usize>,
}

/// Assembled `-L` restricted to the pressure unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureSystem {
    /// Unknown slot of each vertex.
    pub slot: Vec<Option<usize>>,
    /// Vertex of each unknown slot.
    pub unknowns: Vec<usize>,
    /// Vertices fixed to zero to remove the constant null space.
    pub pinned: Vec<usize>,
    pub matrix: CsrMatrix,
    closed: Vec<ClosedComponent>,
}

/// Square sparse matrix in compressed-row form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsrMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl CsrMatrix {
    /// Build an `n x n` matrix from `(row, col) -> value` entries.
    pub fn from_entries(n: usize, entries: &BTreeMap<(usize, usize), f64>) -> Self {
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        let mut diag = vec![0.0; n];
        for (&(r, c), &v) in entries {
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
            if r == c {
                diag[r] = v;
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            row_ptr,
            cols,
            vals,
            diag,
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.len() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[r] = s;
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for r in 0..n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k])] = self.vals[k];
            }
        }
        m
    }
}

impl PressureSystem {
    pub fn new(mesh: &SurfaceMesh) -> Self {
        let nv = mesh.num_vertices();
        let candidates: Vec<bool> = (0..nv).map(|v| mesh.pressure_unknown(v)).collect();

        // connected fluid regions, to find ones without a free surface
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for f in mesh.fluid_faces() {
            let t = mesh.triangles[f];
            for k in 1..3 {
                let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: BTreeMap<usize, (bool, Vec<usize>)> = BTreeMap::new();
        for v in 0..nv {
            let fluid = mesh.vertex_faces[v].iter().any(|&f| mesh.is_fluid_face(f));
            if !fluid {
                continue;
            }
            let root = find(&mut parent, v);
            let e = groups.entry(root).or_insert((false, Vec::new()));
            e.0 |= mesh.free_surface[v];
            e.1.push(v);
        }
        let mut pinned = Vec::new();
        let mut closed_vertices = Vec::new();
        for (_, (open, verts)) in groups {
            if !open {
                pinned.push(verts[0]);
                closed_vertices.push(verts);
            }
        }

        let mut slot = vec![None; nv];
        let mut unknowns = Vec::new();
        for v in 0..nv {
            if candidates[v] && !pinned.contains(&v) {
                slot[v] = Some(unknowns.len());
                unknowns.push(v);
            }
        }
        let closed = closed_vertices
            .into_iter()
            .map(|verts| ClosedComponent {
                unknowns: verts.iter().filter_map(|&v| slot[v]).collect(),
                vertices: verts,
            })
            .collect();

        let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for f in mesh.fluid_faces() {
            let t = mesh.triangles[f];
            let g = &mesh.faces[f];
            let grads = g.hat_gradients();
            let pg: Vec<_> = grads.iter().map(|x| mesh.enforce_walls(f, x)).collect();
            for i in 0..3 {
                let Some(si) = slot[t[i]] else { continue };
                for j in i..3 {
                    let Some(sj) = slot[t[j]] else { continue };
                    let k = grads[i].dot(&pg[j]) / g.area;
                    *entries.entry((si, sj)).or_insert(0.0) += k;
                    if si != sj {
                        *entries.entry((sj, si)).or_insert(0.0) += k;
                    }
                }
            }
        }
        let matrix = CsrMatrix::from_entries(unknowns.len(), &entries);
        Self {
            slot,
            unknowns,
            pinned,
            matrix,
            closed,
        }
    }

    pub fn len(&self) -> usize {
        self.unknowns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unknowns.is_empty()
    }

    /// Dense copy of the assembled SPD matrix `A = -L`.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        self.matrix.to_dense()
    }

    /// Right-hand side `b = -rhs` on the unknowns, made compatible on closed
    /// components.
    pub fn right_hand_side(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut b: Vec<f64> = self.unknowns.iter().map(|&v| -rhs[v]).collect();
        for comp in &self.closed {
            let total: f64 = comp.vertices.iter().map(|&v| rhs[v]).sum();
            let scale: f64 = comp.vertices.iter().map(|&v| rhs[v].abs()).sum();
            if total.abs() > 1e-9 * scale {
                return Err(Error::SingularSystem(format!(
                    "closed region without free surface has net source {total:e}"
                )));
            }
            let mean = -total / comp.vertices.len() as f64;
            for &s in &comp.unknowns {
                b[s] -= mean;
            }
        }
        Ok(b)
    }

    /// Solve `L p = rhs` (per vertex) with free-surface `p = 0`.
    pub fn solve(&self, rhs: &[f64], params: &SolverParams) -> Result<(PressureField, SolveStats)> {
        let nv = self.slot.len();
        if rhs.len() != nv {
            return Err(Error::InvalidInput(format!(
                "right-hand side has {} values for {} vertices",
                rhs.len(),
                nv
            )));
        }
        if rhs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("right-hand side is not finite".into()));
        }
        let b = self.right_hand_side(rhs)?;
        let (x, stats) = conjugate_gradient(&self.matrix, &b, params)?;
        let mut p = vec![0.0; nv];
        for (s, &v) in self.unknowns.iter().enumerate() {
            p[v] = x[s];
        }
        Ok((PressureField { p }, stats))
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Iterations behind the A-norm error estimate.
const ERROR_DELAY: usize = 4;

/// Jacobi-preconditioned conjugate gradient from a zero initial guess.
///
/// Stops when the residual meets the tolerance and the A-norm error,
/// estimated from the last few step decrements, is below `tol` relative to
/// the solution. When the recurrence residual meets the tolerance but the
/// true residual does not, the iteration restarts from the true residual.
pub fn conjugate_gradient(
    sys: &CsrMatrix,
    b: &[f64],
    params: &SolverParams,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = sys.len();
    let mut x = vec![0.0; n];
    let bn = inf_norm(b);
    if n == 0 || bn == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        ));
    }
    let target = params.tol * bn;
    let inv_diag: Vec<f64> = sys
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        // energy decrements alpha_j r_j.z_j of recent steps
        let mut recent = std::collections::VecDeque::with_capacity(ERROR_DELAY);
        let energy_open = |recent: &std::collections::VecDeque<f64>, x: &[f64]| {
            let err: f64 = recent.iter().sum();
            recent.len() < ERROR_DELAY.min(n) || err > params.tol * params.tol * dot(x, b).abs()
        };
        while iterations < params.max_iter && rz > 0.0 && (inf_norm(&r) > target || energy_open(&recent, &x)) {
            sys.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0 && pap.is_finite()) {
                return Err(Error::SolverDiverged {
                    iterations,
                    residual: inf_norm(&r) / bn,
                });
            }
            let alpha = rz / pap;
            if recent.len() == ERROR_DELAY {
                recent.pop_front();
            }
            recent.push_back(alpha * rz);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        // true residual
        sys.apply(&x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        let res = inf_norm(&r);
        if !res.is_finite() {
            return Err(Error::SolverDiverged {
                iterations,
                residual: f64::INFINITY,
            });
        }
        if res <= target || iterations >= params.max_iter {
            let converged = res <= target;
            if !converged && res >= bn {
                return Err(Error::SolverDiverged {
                    iterations,
                    residual: res / bn,
                });
            }
            return Ok((
                x,
                SolveStats {
                    iterations,
                    residual: res / bn,
                    converged,
                },
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::FaceVelocityField;
    use crate::mesh::{CellKind, Vec3};
    use crate::sim::operators::tests::random_mesh;
    use crate::sim::operators::{face_gradient, vertex_divergence};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `L` built column by column from the two operators.
    fn operator_column(mesh: &SurfaceMesh, v: usize) -> Vec<f64> {
        let mut p = vec![0.0; mesh.num_vertices()];
        p[v] = 1.0;
        let g = face_gradient(&p, mesh).unwrap();
        let faces = FaceVelocityField::from_fn(mesh, |f| {
            if mesh.is_fluid_face(f) {
                mesh.enforce_walls(f, &g[f])
            } else {
                Vec3::zeros()
            }
        });
        vertex_divergence(&faces, mesh)
    }

    #[test]
    fn assembly_matches_operator_composition() {
        let m = random_mesh(5, 5);
        let sys = PressureSystem::new(&m);
        let dense = sys.to_dense();
        for (j, &vj) in sys.unknowns.iter().enumerate() {
            let col = operator_column(&m, vj);
            for (i, &vi) in sys.unknowns.iter().enumerate() {
                assert!((dense[(i, j)] + col[vi]).abs() < 1e-9);
            }
        }
        assert!((dense.clone() - dense.transpose()).norm() < 1e-12);
    }

    #[test]
    fn zero_rhs_gives_zero_pressure() {
        let m = random_mesh(6, 5);
        let sys = PressureSystem::new(&m);
        let (p, stats) = sys.solve(&vec![0.0; m.num_vertices()], &SolverParams::default()).unwrap();
        assert!(p.p.iter().all(|&x| x == 0.0));
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn free_surface_vertices_stay_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_mesh(7, 6);
        let sys = PressureSystem::new(&m);
        let rhs: Vec<f64> = (0..m.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (p, _) = sys.solve(&rhs, &SolverParams::default()).unwrap();
        for v in 0..m.num_vertices() {
            if m.free_surface[v] {
                assert_eq!(p.p[v], 0.0);
            }
        }
    }

    #[test]
    fn solve_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_mesh(8, 7);
        let sys = PressureSystem::new(&m);
        let rhs: Vec<f64> = (0..m.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let params = SolverParams {
            tol: 1e-12,
            max_iter: 2000,
        };
        let (p1, _) = sys.solve(&rhs, &params).unwrap();
        let scaled: Vec<f64> = rhs.iter().map(|x| -3.5 * x).collect();
        let (p2, _) = sys.solve(&scaled, &params).unwrap();
        let scale = p1.p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in p1.p.iter().zip(&p2.p) {
            assert!((b + 3.5 * a).abs() <= 1e-9 * scale.max(1.0));
        }
    }

    /// Closed box: every border edge is a wall.
    fn closed_mesh() -> SurfaceMesh {
        let base = random_mesh(3, 5);
        let mut verts = base.vertices.clone();
        // a ring of solid faces around the patch
        let mut tris = base.triangles.clone();
        let mut flags = vec![CellKind::Fluid; tris.len()];
        let lift = Vec3::new(0.0, 0.0, 0.2);
        for e in base.boundary_edges.iter() {
            let [a, b] = e.vertices;
            let c = verts.len();
            let out = base.faces[e.face].edge_normals[e.local] * 0.5;
            verts.push((base.vertices[a] + base.vertices[b]) * 0.5 + out + lift);
            tris.push([b, a, c]);
            flags.push(CellKind::Solid);
        }
        SurfaceMesh::from_triangles(verts, tris, flags).unwrap()
    }

    #[test]
    fn closed_region_is_gauge_fixed() {
        let m = closed_mesh();
        assert!(m.boundary_edges.iter().all(|e| e.kind == crate::mesh::BoundaryKind::Wall));
        let sys = PressureSystem::new(&m);
        assert_eq!(sys.pinned.len(), 1);
        // compatible right-hand side: divergence of some velocity field
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let faces = FaceVelocityField::from_fn(&m, |f| {
            let w = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0);
            if m.is_fluid_face(f) { m.enforce_walls(f, &w) } else { Vec3::zeros() }
        });
        let div = vertex_divergence(&faces, &m);
        let (p, stats) = sys.solve(&div, &SolverParams::default()).unwrap();
        assert!(stats.converged);
        assert_eq!(p.p[sys.pinned[0]], 0.0);
    }

    #[test]
    fn net_source_on_closed_region_is_singular() {
        let m = closed_mesh();
        let sys = PressureSystem::new(&m);
        let rhs: Vec<f64> = (0..m.num_vertices())
            .map(|v| if m.pressure_unknown(v) || sys.pinned.contains(&v) { 1.0 } else { 0.0 })
            .collect();
        assert!(matches!(
            sys.solve(&rhs, &SolverParams::default()),
            Err(Error::SingularSystem(_))
        ));
    }
}
