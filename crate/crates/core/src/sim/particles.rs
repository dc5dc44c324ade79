//! Surface-bound material points.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lift::FaceVelocityField;
use crate::mesh::{BoundaryKind, SearchScope, SurfaceMesh, Vec3};

/// Material points with position, velocity, and host face.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParticleSet {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub host: Vec<usize>,
    pub lambdas: Vec<[f64; 3]>,
    pub alive: Vec<bool>,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn push(&mut self, position: Vec3, velocity: Vec3, host: usize, lambdas: [f64; 3]) {
        self.positions.push(position);
        self.velocities.push(velocity);
        self.host.push(host);
        self.lambdas.push(lambdas);
        self.alive.push(true);
    }

    /// Drop dead particles, keeping the order of the survivors.
    pub fn compact(&mut self) {
        fn keep<T>(v: &mut Vec<T>, mask: &[bool]) {
            let mut it = mask.iter();
            v.retain(|_| *it.next().expect("same length"));
        }
        let mask = self.alive.clone();
        keep(&mut self.positions, &mask);
        keep(&mut self.velocities, &mask);
        keep(&mut self.host, &mask);
        keep(&mut self.lambdas, &mask);
        keep(&mut self.alive, &mask);
    }

    /// Kill every particle hosted on a face for which `dead` holds.
    pub fn kill_where(&mut self, dead: impl Fn(usize) -> bool) -> usize {
        let mut n = 0;
        for (a, &h) in self.alive.iter_mut().zip(&self.host) {
            if *a && dead(h) {
                *a = false;
                n += 1;
            }
        }
        n
    }

    pub fn all_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Uniform barycentric weights.
fn random_barycentric<R: Rng>(rng: &mut R) -> [f64; 3] {
    let s = rng.gen::<f64>().sqrt();
    let t = rng.gen::<f64>();
    [1.0 - s, s * (1.0 - t), s * t]
}

/// `per_face * fluid_faces` particles, faces drawn in proportion to area.
pub fn seed_particles<R: Rng>(
    mesh: &SurfaceMesh,
    faces: &FaceVelocityField,
    per_face: usize,
    rng: &mut R,
) -> Result<ParticleSet> {
    let fluid: Vec<usize> = mesh.fluid_faces().collect();
    if fluid.is_empty() {
        return Err(Error::EmptyFluidRegion);
    }
    let dist = WeightedIndex::new(fluid.iter().map(|&f| mesh.faces[f].area))
        .map_err(|e| Error::InvalidInput(format!("face areas: {e}")))?;
    let mut set = ParticleSet::default();
    for _ in 0..per_face * fluid.len() {
        let f = fluid[dist.sample(rng)];
        let l = random_barycentric(rng);
        set.push(mesh.point_at(f, l), faces.w[f], f, l);
    }
    Ok(set)
}

/// Direction of flow across an open boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeFlow {
    Inward,
    Outward,
    Tangent,
}

/// Open edge classified by the velocity of its face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpenEdge {
    pub edge: usize,
    pub face: usize,
    pub flow: EdgeFlow,
    /// `w . n_out * |edge|`; negative for inflow.
    pub flux: f64,
}

pub fn classify_open_edges(mesh: &SurfaceMesh, faces: &FaceVelocityField) -> Vec<OpenEdge> {
    mesh.boundary_edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == BoundaryKind::Open)
        .map(|(i, e)| {
            let n = mesh.faces[e.face].edge_normals[e.local];
            let len = (mesh.vertices[e.vertices[1]] - mesh.vertices[e.vertices[0]]).norm();
            let w = faces.w[e.face];
            let flux = w.dot(&n) * len;
            let tol = 1e-12 * w.norm() * len;
            let flow = if flux < -tol {
                EdgeFlow::Inward
            } else if flux > tol {
                EdgeFlow::Outward
            } else {
                EdgeFlow::Tangent
            };
            OpenEdge {
                edge: i,
                face: e.face,
                flow,
                flux,
            }
        })
        .collect()
}

/// Move every particle by `v dt` and pull it back onto the fluid surface.
///
/// Velocity components into wall edges of the host face are removed first.
/// A particle whose step carries it out across an open edge is killed.
/// Returns the number killed.
pub fn advect(particles: &mut ParticleSet, mesh: &SurfaceMesh, dt: f64) -> usize {
    let moved: Vec<Option<(Vec3, usize, [f64; 3], bool)>> = (0..particles.len())
        .into_par_iter()
        .map(|i| {
            if !particles.alive[i] {
                return None;
            }
            let host = particles.host[i];
            let v = mesh.enforce_walls(host, &particles.velocities[i]);
            if v == Vec3::zeros() {
                return None;
            }
            let target = particles.positions[i] + v * dt;
            let loc = mesh.closest_point(&target, Some(host), SearchScope::Fluid)?;
            let offset = target - loc.point;
            let eps = 1e-9 * (v.norm() * dt) + 1e-15;
            let f = loc.triangle;
            let exits = (0..3).any(|k| {
                mesh.face_boundary[f][k] == Some(BoundaryKind::Open)
                    && loc.lambdas[(k + 2) % 3] <= 1e-12
                    && offset.dot(&mesh.faces[f].edge_normals[k]) > eps
            });
            Some((loc.point, f, loc.lambdas, exits))
        })
        .collect();
    let mut killed = 0;
    for (i, m) in moved.into_iter().enumerate() {
        if let Some((p, f, l, exits)) = m {
            if exits {
                particles.alive[i] = false;
                killed += 1;
            } else {
                particles.positions[i] = p;
                particles.host[i] = f;
                particles.lambdas[i] = l;
            }
        }
    }
    killed
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Replenishment {
    pub injected: usize,
    /// Particles still missing after injection.
    pub deficit: usize,
}

/// Top the alive count back up to `target` from inflow edges.
///
/// New particles are placed uniformly on faces adjacent to inward edges,
/// each face chosen in proportion to its inflow, and take that face's
/// velocity. Without inward edges nothing is injected.
pub fn replenish<R: Rng>(
    particles: &mut ParticleSet,
    mesh: &SurfaceMesh,
    faces: &FaceVelocityField,
    edges: &[OpenEdge],
    target: usize,
    rng: &mut R,
) -> Replenishment {
    let alive = particles.alive_count();
    let missing = target.saturating_sub(alive);
    if missing == 0 {
        return Replenishment::default();
    }
    let mut sources: Vec<(usize, f64)> = Vec::new();
    for e in edges.iter().filter(|e| e.flow == EdgeFlow::Inward) {
        match sources.iter_mut().find(|(f, _)| *f == e.face) {
            Some(s) => s.1 -= e.flux,
            None => sources.push((e.face, -e.flux)),
        }
    }
    let Ok(dist) = WeightedIndex::new(sources.iter().map(|s| s.1)) else {
        return Replenishment {
            injected: 0,
            deficit: missing,
        };
    };
    for _ in 0..missing {
        let f = sources[dist.sample(rng)].0;
        let l = random_barycentric(rng);
        particles.push(mesh.point_at(f, l), faces.w[f], f, l);
    }
    Replenishment {
        injected: missing,
        deficit: 0,
    }
}

/// Face velocity as the mean of hosted particles, projected to the face
/// plane. Empty fluid faces take the area-weighted mean of filled edge
/// neighbors, spreading inward from populated faces.
pub fn particles_to_faces(particles: &ParticleSet, mesh: &SurfaceMesh) -> FaceVelocityField {
    let nf = mesh.num_faces();
    let mut sum = vec![Vec3::zeros(); nf];
    let mut count = vec![0usize; nf];
    for i in 0..particles.len() {
        if particles.alive[i] {
            let h = particles.host[i];
            sum[h] += particles.velocities[i];
            count[h] += 1;
        }
    }
    let mut w = vec![Vec3::zeros(); nf];
    let mut filled = vec![false; nf];
    for f in mesh.fluid_faces() {
        if count[f] > 0 {
            w[f] = mesh.faces[f].tangential(&(sum[f] / count[f] as f64));
            filled[f] = true;
        }
    }
    loop {
        let mut updates = Vec::new();
        for f in mesh.fluid_faces() {
            if filled[f] {
                continue;
            }
            let mut acc = Vec3::zeros();
            let mut area = 0.0;
            for g in mesh.face_neighbors[f].iter().flatten() {
                if filled[*g] && mesh.is_fluid_face(*g) {
                    acc += w[*g] * mesh.faces[*g].area;
                    area += mesh.faces[*g].area;
                }
            }
            if area > 0.0 {
                updates.push((f, mesh.faces[f].tangential(&(acc / area))));
            }
        }
        if updates.is_empty() {
            break;
        }
        for (f, v) in updates {
            w[f] = v;
            filled[f] = true;
        }
    }
    FaceVelocityField::from_velocities(mesh, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::CellKind;
    use crate::sim::operators::tests::random_mesh;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::collections::BTreeMap;

    fn two_faces() -> SurfaceMesh {
        let v = vec![
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 1.0),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(0.0, 1.0, 1.0),
        ];
        SurfaceMesh::from_triangles(v, vec![[0, 1, 2], [0, 2, 3]], vec![CellKind::Fluid; 2]).unwrap()
    }

    #[test]
    fn seeding_is_reproducible() {
        let m = two_faces();
        let faces = FaceVelocityField::zeros(2);
        let a = seed_particles(&m, &faces, 4, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = seed_particles(&m, &faces, 4, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn seeded_particles_lie_inside_their_face() {
        let v = vec![Vec3::new(0.0, 0.0, 2.0), Vec3::new(1.0, 0.2, 2.5), Vec3::new(0.1, 1.0, 1.5)];
        let m = SurfaceMesh::from_triangles(v, vec![[0, 1, 2]], vec![CellKind::Fluid]).unwrap();
        let p = seed_particles(&m, &FaceVelocityField::zeros(1), 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for i in 0..p.len() {
            let l = p.lambdas[i];
            assert!(l.iter().all(|&x| x >= 0.0));
            assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((m.point_at(0, l) - p.positions[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn density_follows_area() {
        let m = random_mesh(21, 8);
        let n_total = 10_000;
        let per_face = n_total / m.num_fluid_faces() + 1;
        let p = seed_particles(&m, &FaceVelocityField::zeros(m.num_faces()), per_face, &mut ChaCha8Rng::seed_from_u64(2))
            .unwrap();
        let mut count = vec![0usize; m.num_faces()];
        for &h in &p.host {
            count[h] += 1;
        }
        let total_area = m.total_area();
        let n = p.len() as f64;
        let chi2: f64 = (0..m.num_faces())
            .map(|f| {
                let e = n * m.faces[f].area / total_area;
                (count[f] as f64 - e).powi(2) / e
            })
            .sum();
        let dof = (m.num_faces() - 1) as f64;
        let pval = 1.0 - ChiSquared::new(dof).unwrap().cdf(chi2);
        assert!(pval > 0.01, "chi2 {chi2} dof {dof} p {pval}");
    }

    #[test]
    fn zero_velocity_keeps_positions() {
        let m = random_mesh(4, 5);
        let mut p = seed_particles(&m, &FaceVelocityField::zeros(m.num_faces()), 4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let before = p.clone();
        assert_eq!(advect(&mut p, &m, 1.0), 0);
        assert_eq!(p, before);
    }

    #[test]
    fn in_plane_step_on_flat_mesh() {
        let n = 8;
        let mut v = Vec::new();
        for r in 0..n {
            for c in 0..n {
                v.push(Vec3::new(c as f64, r as f64, 2.0));
            }
        }
        let mut t = Vec::new();
        for r in 0..n - 1 {
            for c in 0..n - 1 {
                let tl = r * n + c;
                t.push([tl, tl + n + 1, tl + 1]);
                t.push([tl, tl + n, tl + n + 1]);
            }
        }
        let flags = vec![CellKind::Fluid; t.len()];
        let m = SurfaceMesh::from_triangles(v, t, flags).unwrap();
        let vel = Vec3::new(0.13, -0.07, 0.0);
        let faces = FaceVelocityField::from_fn(&m, |_| vel);
        let mut p = seed_particles(&m, &faces, 2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        // keep particles away from the open border
        p.alive = p.positions.iter().map(|x| x.x > 1.0 && x.x < 6.0 && x.y > 1.0 && x.y < 6.0).collect();
        let before = p.clone();
        let dt = 0.5;
        advect(&mut p, &m, dt);
        for i in 0..p.len() {
            if before.alive[i] {
                assert!((p.positions[i] - (before.positions[i] + vel * dt)).norm() < 1e-12);
                let h = p.host[i];
                assert!((m.point_at(h, p.lambdas[i]) - p.positions[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cylinder_particles_stay_on_surface() {
        // section of a cylinder of radius R around the y axis, facing the camera
        let r = 4.0;
        let (nu, nv) = (60, 6);
        let mut v = Vec::new();
        for j in 0..nv {
            for i in 0..nu {
                let th = -0.6 + 1.2 * i as f64 / (nu - 1) as f64;
                v.push(Vec3::new(r * th.sin(), j as f64 * 0.2, 8.0 - r * th.cos()));
            }
        }
        let mut t = Vec::new();
        for j in 0..nv - 1 {
            for i in 0..nu - 1 {
                let tl = j * nu + i;
                t.push([tl, tl + nu + 1, tl + 1]);
                t.push([tl, tl + nu, tl + nu + 1]);
            }
        }
        let flags = vec![CellKind::Fluid; t.len()];
        let m = SurfaceMesh::from_triangles(v, t, flags).unwrap();
        let speed = 0.05;
        // tangential circumferential velocity on every face
        let faces = FaceVelocityField::from_fn(&m, |f| {
            let c = m.faces[f].centroid;
            let th = c.x.atan2(8.0 - c.z);
            Vec3::new(th.cos(), 0.0, th.sin()) * speed
        });
        let mut p = ParticleSet::default();
        let f0 = m
            .fluid_faces()
            .find(|&f| m.faces[f].centroid.x.abs() < 0.1 && m.faces[f].centroid.y > 0.3)
            .unwrap();
        p.push(m.faces[f0].centroid, faces.w[f0], f0, [1.0 / 3.0; 3]);
        for _ in 0..20 {
            let before = p.positions[0];
            advect(&mut p, &m, 1.0);
            assert!(p.alive[0]);
            let moved = (p.positions[0] - before).norm();
            assert!((moved - speed).abs() <= 0.05 * speed, "moved {moved}");
            let h = p.host[0];
            assert!((m.point_at(h, p.lambdas[0]) - p.positions[0]).norm() < 1e-6);
            p.velocities[0] = faces.w[h];
        }
    }

    #[test]
    fn outward_particles_are_killed_and_sources_refill() {
        let n = 10;
        let mut v = Vec::new();
        for r in 0..n {
            for c in 0..n {
                v.push(Vec3::new(c as f64 * 0.1, r as f64 * 0.1, 1.0));
            }
        }
        let mut t = Vec::new();
        for r in 0..n - 1 {
            for c in 0..n - 1 {
                let tl = r * n + c;
                t.push([tl, tl + n + 1, tl + 1]);
                t.push([tl, tl + n, tl + n + 1]);
            }
        }
        let flags = vec![CellKind::Fluid; t.len()];
        let m = SurfaceMesh::from_triangles(v, t, flags).unwrap();
        let faces = FaceVelocityField::from_fn(&m, |_| Vec3::new(0.05, 0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut p = seed_particles(&m, &faces, 4, &mut rng).unwrap();
        let target = p.len();
        let killed = advect(&mut p, &m, 1.0);
        assert!(killed > 0);
        for i in 0..p.len() {
            if !p.alive[i] {
                assert!(p.positions[i].x > 0.9 - 0.05 - 1e-12);
            }
        }
        p.compact();
        let edges = classify_open_edges(&m, &faces);
        assert!(edges.iter().any(|e| e.flow == EdgeFlow::Inward));
        let rep = replenish(&mut p, &m, &faces, &edges, target, &mut rng);
        assert_eq!(rep.injected, killed);
        assert_eq!(p.alive_count(), target);
        for i in target - killed..p.len() {
            // sources sit on the left border column of faces
            assert!(p.positions[i].x <= 0.1 + 1e-12);
        }
    }

    #[test]
    fn no_inward_edges_reports_deficit() {
        let m = two_faces();
        let faces = FaceVelocityField::zeros(2);
        let mut p = ParticleSet::default();
        let edges = classify_open_edges(&m, &faces);
        let rep = replenish(&mut p, &m, &faces, &edges, 5, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(rep, Replenishment { injected: 0, deficit: 5 });
        let rep = replenish(&mut p, &m, &faces, &edges, 0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(rep, Replenishment::default());
    }

    #[test]
    fn tangent_particle_velocity_is_kept() {
        let m = random_mesh(11, 5);
        let p = {
            let mut p = ParticleSet::default();
            for f in m.fluid_faces() {
                let w = m.faces[f].edges.column(0).into_owned() * 0.3;
                for _ in 0..3 {
                    p.push(m.faces[f].centroid, w, f, [1.0 / 3.0; 3]);
                }
            }
            p
        };
        let faces = particles_to_faces(&p, &m);
        for f in m.fluid_faces() {
            let want = m.faces[f].edges.column(0).into_owned() * 0.3;
            assert!((faces.w[f] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn empty_face_takes_neighbor_velocity() {
        let m = random_mesh(12, 4);
        let v = Vec3::new(0.2, -0.1, 0.0);
        let empty = 5;
        let mut p = ParticleSet::default();
        for f in m.fluid_faces() {
            if f != empty {
                p.push(m.faces[f].centroid, m.faces[f].tangential(&v), f, [1.0 / 3.0; 3]);
            }
        }
        let faces = particles_to_faces(&p, &m);
        let mut acc = Vec3::zeros();
        let mut area = 0.0;
        for g in m.face_neighbors[empty].iter().flatten() {
            acc += faces.w[*g] * m.faces[*g].area;
            area += m.faces[*g].area;
        }
        let want = m.faces[empty].tangential(&(acc / area));
        assert!((faces.w[empty] - want).norm() < 1e-12);
    }

    #[test]
    fn grouping_oracle() {
        let m = random_mesh(13, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut p = seed_particles(&m, &FaceVelocityField::zeros(m.num_faces()), 3, &mut rng).unwrap();
        for v in p.velocities.iter_mut() {
            *v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        for i in 0..p.len() {
            p.alive[i] = i % 7 != 0;
        }
        let faces = particles_to_faces(&p, &m);
        let mut groups: BTreeMap<usize, Vec<Vec3>> = BTreeMap::new();
        for i in 0..p.len() {
            if p.alive[i] {
                groups.entry(p.host[i]).or_default().push(p.velocities[i]);
            }
        }
        for (f, vs) in groups {
            let mean = vs.iter().fold(Vec3::zeros(), |a, b| a + b) / vs.len() as f64;
            let n = m.faces[f].normal;
            let want = mean - n * n.dot(&mean);
            assert!((faces.w[f] - want).norm() < 1e-12);
        }
    }
}
