//! Triangle meshes for inserted objects.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Closed triangle mesh in object coordinates (meters).
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Axis-aligned box centered on the origin.
    pub fn cuboid(half: Vec3) -> Self {
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            let s = |b: usize| if i & b != 0 { 1.0 } else { -1.0 };
            vertices.push(Vec3::new(s(1) * half.x, s(2) * half.y, s(4) * half.z));
        }
        let quads = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Self {
            vertices,
            triangles,
        }
    }

    /// Latitude-longitude sphere centered on the origin.
    pub fn sphere(radius: f64, stacks: usize, slices: usize) -> Self {
        let (stacks, slices) = (stacks.max(2), slices.max(3));
        let mut vertices = vec![Vec3::new(0.0, radius, 0.0)];
        for i in 1..stacks {
            let theta = PI * i as f64 / stacks as f64;
            for j in 0..slices {
                let phi = 2.0 * PI * j as f64 / slices as f64;
                vertices.push(Vec3::new(
                    radius * theta.sin() * phi.cos(),
                    radius * theta.cos(),
                    radius * theta.sin() * phi.sin(),
                ));
            }
        }
        let south = vertices.len();
        vertices.push(Vec3::new(0.0, -radius, 0.0));
        let ring = |i: usize, j: usize| 1 + (i - 1) * slices + j % slices;
        let mut triangles = Vec::new();
        for j in 0..slices {
            triangles.push([0, ring(1, j + 1), ring(1, j)]);
            triangles.push([south, ring(stacks - 1, j), ring(stacks - 1, j + 1)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                triangles.push([a, b, d]);
                triangles.push([a, d, c]);
            }
        }
        Self {
            vertices,
            triangles,
        }
    }

    /// Parse `v` and `f` records of a Wavefront OBJ; polygons are fanned.
    pub fn from_obj(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let bad = |m: &str| Error::Format { format: "obj", reason: format!("line {}: {m}", n + 1) };
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it
                        .take(3)
                        .map(|s| s.parse::<f64>().map_err(|_| bad("bad coordinate")))
                        .collect::<Result<_>>()?;
                    if c.len() != 3 || c.iter().any(|x| !x.is_finite()) {
                        return Err(bad("vertex needs three finite coordinates"));
                    }
                    vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = it
                        .map(|tok| {
                            let i: i64 = tok
                                .split('/')
                                .next()
                                .and_then(|s| s.parse().ok())
                                .ok_or_else(|| bad("bad face index"))?;
                            let r = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                            if r < 0 || r as usize >= vertices.len() {
                                return Err(bad("face index out of range"));
                            }
                            Ok(r as usize)
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() < 3 {
                        return Err(bad("face needs three vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        if triangles.is_empty() {
            return Err(Error::Format { format: "obj", reason: "no faces".into() });
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    /// Signed volume; positive for outward-facing winding.
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }
}
