//! Triangulated surface meshes lifted from depth maps.
//!
//! The mesh covers the whole image. Faces whose three vertices lie in the
//! fluid mask are FLUID and form the simulation domain; every other face is
//! SOLID geometry that only contributes wall boundaries.

mod build;
mod bvh;
pub mod geometry;
mod zbuffer;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use build::{build_mesh, MeshParams, DEFAULT_MAX_DEPTH_RATIO};
pub use bvh::Nearest;
pub use geometry::{
    closest_point_on_triangle, project, project_velocity, projection_jacobian,
    triangle_basis_solve, unproject, FaceGeometry, Vec3,
};

pub use zbuffer::{for_each_covered_pixel, ZBuffer};

use crate::error::{Error, Result};
use bvh::Bvh;

/// Label carried by mesh vertices, mesh faces, and 2D grid cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Fluid,
    Solid,
    Air,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryKind {
    /// Borders solid geometry; no flow crosses it.
    Wall,
    /// Borders nothing; a free surface where fluid may enter or leave.
    Open,
}

/// An edge of the fluid sub-mesh owned by exactly one fluid face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub face: usize,
    /// Local edge index: from corner `local` to corner `(local + 1) % 3`.
    pub local: usize,
    pub vertices: [usize; 2],
    pub kind: BoundaryKind,
}

/// Where a query point lands on the mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarycentricLocation {
    pub triangle: usize,
    pub lambdas: [f64; 3],
    pub point: Vec3,
    pub distance: f64,
}

/// Which faces a closest-point query may land on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchScope {
    All,
    Fluid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Source pixel of each vertex, when built from an image.
    pub pixel_of_vertex: Vec<[usize; 2]>,
    pub vertex_flags: Vec<CellKind>,
    pub faces: Vec<FaceGeometry>,
    pub face_flags: Vec<CellKind>,
    pub vertex_faces: Vec<Vec<usize>>,
    /// Face across each local edge, if any.
    pub face_neighbors: Vec<[Option<usize>; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Boundary kind of each local edge of each face (fluid faces only).
    pub face_boundary: Vec<[Option<BoundaryKind>; 3]>,
    /// Vertices carrying the free-surface condition `p = 0`.
    pub free_surface: Vec<bool>,
    /// Image size the mesh was built for, if any.
    pub image_size: Option<(usize, usize)>,
    base_face_flags: Vec<CellKind>,
    base_vertex_flags: Vec<CellKind>,
    cut_faces: BTreeSet<usize>,
    /// Local edges whose missing neighbor was dropped solid geometry.
    solid_gaps: BTreeSet<(usize, usize)>,
    bvh: Bvh,
}

/// Faces smaller than this (m^2) are dropped or rejected.
pub const MIN_FACE_AREA: f64 = 1e-12;

impl SurfaceMesh {
    /// Build from explicit geometry. `face_flags` marks the fluid domain.
    pub fn from_triangles(
        vertices: Vec<Vec3>,
        triangles: Vec<[usize; 3]>,
        face_flags: Vec<CellKind>,
    ) -> Result<Self> {
        let n = vertices.len();
        let mut vertex_flags = vec![CellKind::Solid; n];
        for (t, flag) in triangles.iter().zip(&face_flags) {
            if *flag == CellKind::Fluid {
                for &v in t {
                    vertex_flags[v] = CellKind::Fluid;
                }
            }
        }
        Self::assemble(vertices, triangles, face_flags, vertex_flags, Vec::new(), BTreeSet::new(), None)
    }

    pub(crate) fn assemble(
        vertices: Vec<Vec3>,
        triangles: Vec<[usize; 3]>,
        face_flags: Vec<CellKind>,
        vertex_flags: Vec<CellKind>,
        pixel_of_vertex: Vec<[usize; 2]>,
        solid_edge_keys: BTreeSet<(usize, usize)>,
        image_size: Option<(usize, usize)>,
    ) -> Result<Self> {
        if face_flags.len() != triangles.len() {
            return Err(Error::InvalidInput("one flag per face required".into()));
        }
        let n = vertices.len();
        let mut faces = Vec::with_capacity(triangles.len());
        for (f, t) in triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= n) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidInput(format!("face {f} has bad vertex indices {t:?}")));
            }
            let g = FaceGeometry::new(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]);
            if g.is_degenerate(MIN_FACE_AREA) {
                return Err(Error::DegenerateTriangle(f));
            }
            faces.push(g);
        }
        let mut vertex_faces = vec![Vec::new(); n];
        let mut edge_map: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (f, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                vertex_faces[t[k]].push(f);
                edge_map
                    .entry(edge_key(t[k], t[(k + 1) % 3]))
                    .or_default()
                    .push((f, k));
            }
        }
        let mut face_neighbors = vec![[None; 3]; triangles.len()];
        for owners in edge_map.values() {
            if owners.len() == 2 {
                let (f0, k0) = owners[0];
                let (f1, k1) = owners[1];
                face_neighbors[f0][k0] = Some(f1);
                face_neighbors[f1][k1] = Some(f0);
            }
        }
        let mut solid_gaps = BTreeSet::new();
        for (f, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                if face_neighbors[f][k].is_none()
                    && solid_edge_keys.contains(&edge_key(t[k], t[(k + 1) % 3]))
                {
                    solid_gaps.insert((f, k));
                }
            }
        }
        let bvh = Bvh::build(&vertices, &triangles);
        let mut mesh = Self {
            pixel_of_vertex,
            vertex_flags: vertex_flags.clone(),
            face_flags: face_flags.clone(),
            vertex_faces,
            face_neighbors,
            boundary_edges: Vec::new(),
            face_boundary: Vec::new(),
            free_surface: Vec::new(),
            image_size,
            base_face_flags: face_flags,
            base_vertex_flags: vertex_flags,
            cut_faces: BTreeSet::new(),
            solid_gaps,
            bvh,
            vertices,
            triangles,
            faces,
        };
        mesh.relabel();
        Ok(mesh)
    }

    /// Recompute face labels, boundary edges, and free-surface vertices.
    fn relabel(&mut self) {
        let nf = self.triangles.len();
        for f in 0..nf {
            self.face_flags[f] = if self.cut_faces.contains(&f) {
                CellKind::Solid
            } else {
                self.base_face_flags[f]
            };
        }
        for v in 0..self.vertices.len() {
            let base = self.base_vertex_flags[v];
            let touches_fluid = self.vertex_faces[v]
                .iter()
                .any(|&f| self.face_flags[f] == CellKind::Fluid);
            let touches_cut = self.vertex_faces[v]
                .iter()
                .any(|f| self.cut_faces.contains(f));
            self.vertex_flags[v] = if base == CellKind::Fluid && touches_cut && !touches_fluid {
                CellKind::Solid
            } else {
                base
            };
        }
        self.boundary_edges.clear();
        self.face_boundary = vec![[None; 3]; nf];
        self.free_surface = vec![false; self.vertices.len()];
        for f in 0..nf {
            if self.face_flags[f] != CellKind::Fluid {
                continue;
            }
            let t = self.triangles[f];
            for k in 0..3 {
                let kind = match self.face_neighbors[f][k] {
                    Some(g) if self.face_flags[g] == CellKind::Fluid => continue,
                    Some(_) => BoundaryKind::Wall,
                    None if self.solid_gaps.contains(&(f, k)) => BoundaryKind::Wall,
                    None => BoundaryKind::Open,
                };
                let verts = [t[k], t[(k + 1) % 3]];
                if kind == BoundaryKind::Open {
                    self.free_surface[verts[0]] = true;
                    self.free_surface[verts[1]] = true;
                }
                self.face_boundary[f][k] = Some(kind);
                self.boundary_edges.push(BoundaryEdge {
                    face: f,
                    local: k,
                    vertices: verts,
                    kind,
                });
            }
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.triangles.len()
    }

    #[inline]
    pub fn is_fluid_face(&self, f: usize) -> bool {
        self.face_flags[f] == CellKind::Fluid
    }

    pub fn fluid_faces(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_faces()).filter(|&f| self.is_fluid_face(f))
    }

    pub fn num_fluid_faces(&self) -> usize {
        self.fluid_faces().count()
    }

    /// Faces currently relabeled SOLID by an edit.
    pub fn cut_faces(&self) -> &BTreeSet<usize> {
        &self.cut_faces
    }

    /// Vertices that carry a pressure unknown: touching a fluid face and not
    /// on a free surface.
    pub fn pressure_unknown(&self, v: usize) -> bool {
        !self.free_surface[v]
            && self.vertex_faces[v]
                .iter()
                .any(|&f| self.face_flags[f] == CellKind::Fluid)
    }

    /// In-plane outward unit normals of the face's wall edges.
    pub fn wall_normals(&self, f: usize) -> impl Iterator<Item = Vec3> + '_ {
        (0..3).filter_map(move |k| {
            (self.face_boundary[f][k] == Some(BoundaryKind::Wall))
                .then(|| self.faces[f].edge_normals[k])
        })
    }

    /// Strip the wall-normal components of a face velocity.
    ///
    /// With two non-parallel walls nothing tangential is left and the result
    /// is zero.
    pub fn enforce_walls(&self, f: usize, w: &Vec3) -> Vec3 {
        let mut normals = self.wall_normals(f);
        let Some(n1) = normals.next() else {
            return *w;
        };
        let mut out = w - n1 * n1.dot(w);
        for n in normals {
            if n.dot(&n1).abs() > 1.0 - 1e-9 {
                continue;
            }
            out = Vec3::zeros();
        }
        out
    }

    /// Relabel `contact` faces SOLID; interface edges become walls.
    pub fn cut(&self, contact: &BTreeSet<usize>) -> SurfaceMesh {
        let mut out = self.clone();
        out.cut_faces.extend(contact.iter().copied().filter(|&f| f < self.num_faces()));
        out.relabel();
        out
    }

    /// Undo a previous cut of `contact` faces.
    pub fn uncut(&self, contact: &BTreeSet<usize>) -> SurfaceMesh {
        let mut out = self.clone();
        for f in contact {
            out.cut_faces.remove(f);
        }
        out.relabel();
        out
    }

    /// Faces sharing a vertex with `f`, `f` included.
    pub fn one_ring(&self, f: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &v in &self.triangles[f] {
            out.extend(self.vertex_faces[v].iter().copied());
        }
        out
    }

    /// Nearest point on the mesh, globally minimal over `scope`.
    ///
    /// The hint face and its one-ring seed the search bound; the BVH then
    /// only visits boxes that could beat it.
    pub fn closest_point(
        &self,
        query: &Vec3,
        hint: Option<usize>,
        scope: SearchScope,
    ) -> Option<BarycentricLocation> {
        let accept = |f: usize| scope == SearchScope::All || self.is_fluid_face(f);
        let mut best: Option<Nearest> = None;
        if let Some(h) = hint.filter(|&h| h < self.num_faces()) {
            let mut ring: Vec<usize> = vec![h];
            ring.extend(self.one_ring(h).into_iter().filter(|&f| f != h));
            for f in ring {
                if !accept(f) {
                    continue;
                }
                let [a, b, c] = self.triangles[f];
                let (q, l) = closest_point_on_triangle(
                    query,
                    &self.vertices[a],
                    &self.vertices[b],
                    &self.vertices[c],
                );
                let d = (q - query).norm_squared();
                if best.is_none_or(|b| d < b.distance_sq) {
                    best = Some(Nearest {
                        face: f,
                        point: q,
                        lambdas: l,
                        distance_sq: d,
                    });
                }
            }
        }
        let best = self
            .bvh
            .nearest(query, &self.vertices, &self.triangles, accept, best)?;
        Some(BarycentricLocation {
            triangle: best.face,
            lambdas: best.lambdas,
            point: best.point,
            distance: best.distance_sq.sqrt(),
        })
    }

    /// Point with barycentric weights `l` on face `f`.
    pub fn point_at(&self, f: usize, l: [f64; 3]) -> Vec3 {
        let [a, b, c] = self.triangles[f];
        self.vertices[a] * l[0] + self.vertices[b] * l[1] + self.vertices[c] * l[2]
    }

    pub fn total_area(&self) -> f64 {
        self.faces.iter().map(|g| g.area).sum()
    }

    /// Wavefront OBJ text; fluid and solid faces go in separate groups.
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {} vertices, {} faces", self.num_vertices(), self.num_faces());
        for p in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
        }
        for (group, kind) in [("fluid", CellKind::Fluid), ("solid", CellKind::Solid)] {
            let _ = writeln!(s, "g {group}");
            for (t, flag) in self.triangles.iter().zip(&self.face_flags) {
                if *flag == kind {
                    let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
                }
            }
        }
        s
    }
}

#[inline]
pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}
