//! Time stepping: advection, sources, forces, and pressure projection.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::operators::{face_gradient_at, vertex_divergence};
use super::particles::{
    advect, classify_open_edges, particles_to_faces, replenish, seed_particles, ParticleSet,
};
use super::pressure::{PressureField, PressureSystem, SolveStats, SolverParams};
use crate::error::{Error, Result};
use crate::field::MotionField;
use crate::io::CameraIntrinsics;
use crate::lift::{rasterize_surface_motion, FaceVelocityField};
use crate::mesh::{SurfaceMesh, Vec3};

/// Incompressibility weight of the weak-projection preset.
pub const WEAK_BETA: f64 = 0.75;

/// Gravity magnitude before scaling.
pub const STANDARD_GRAVITY: f64 = 9.8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Frame interval.
    pub dt: f64,
    pub density: f64,
    pub gravity: [f64; 3],
    /// Fraction of the pressure correction applied, in `[0, 1]`.
    pub beta: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub particles_per_face: usize,
    pub seed: u64,
    /// Steps run before the first exported field.
    pub warmup_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            density: 1.0,
            gravity: [0.0; 3],
            beta: 1.0,
            solver_tol: 1e-6,
            solver_max_iter: 2000,
            particles_per_face: 4,
            seed: 0,
            warmup_steps: 10,
        }
    }
}

impl SimConfig {
    /// Downward gravity `(0, -9.8 scale, 0)`, for falling water.
    pub fn with_gravity_scale(mut self, scale: f64) -> Self {
        self.gravity = [0.0, -STANDARD_GRAVITY * scale, 0.0];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad("density must be positive");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return bad("solver_tol must lie in (0, 1)");
        }
        if self.solver_max_iter == 0 {
            return bad("solver_max_iter must be at least 1");
        }
        if self.particles_per_face == 0 {
            return bad("particles_per_face must be at least 1");
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return bad("gravity must be finite");
        }
        Ok(())
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            tol: self.solver_tol,
            max_iter: self.solver_max_iter,
        }
    }
}

/// Strip wall-normal components on fluid faces and zero the rest.
pub fn enforce_walls(faces: &FaceVelocityField, mesh: &SurfaceMesh) -> FaceVelocityField {
    FaceVelocityField::from_fn(mesh, |f| {
        if mesh.is_fluid_face(f) {
            mesh.enforce_walls(f, &faces.w[f])
        } else {
            Vec3::zeros()
        }
    })
}

/// Pressure for the divergence `div`: solves `L p = (rho / dt) div`.
pub fn solve_pressure(
    div: &[f64],
    mesh: &SurfaceMesh,
    config: &SimConfig,
) -> Result<(PressureField, SolveStats)> {
    config.validate()?;
    let sys = PressureSystem::new(mesh);
    solve_with(&sys, div, config)
}

fn solve_with(
    sys: &PressureSystem,
    div: &[f64],
    config: &SimConfig,
) -> Result<(PressureField, SolveStats)> {
    let k = config.density / config.dt;
    let rhs: Vec<f64> = div.iter().map(|d| d * k).collect();
    sys.solve(&rhs, &config.solver_params())
}

/// `w* = P w - beta (dt / rho) P grad p` on fluid faces.
pub fn project_velocities(
    faces: &FaceVelocityField,
    pressure: &PressureField,
    mesh: &SurfaceMesh,
    config: &SimConfig,
) -> FaceVelocityField {
    let s = config.beta * config.dt / config.density;
    FaceVelocityField::from_fn(mesh, |f| {
        if !mesh.is_fluid_face(f) {
            return Vec3::zeros();
        }
        let g = face_gradient_at(mesh, f, &pressure.p);
        mesh.enforce_walls(f, &(faces.w[f] - g * s))
    })
}

/// Largest `|div|` over vertices that carry a pressure unknown.
pub fn max_constrained_divergence(div: &[f64], sys: &PressureSystem) -> f64 {
    sys.unknowns.iter().fold(0.0, |m, &v| m.max(div[v].abs()))
}

/// Outcome of one projection.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProjectionReport {
    pub max_div_before: f64,
    pub max_div_after: f64,
    /// `max |(rho / dt) div|` over the constrained vertices.
    pub rhs_inf: f64,
    pub solve: SolveStats,
}

/// Wall enforcement, divergence, pressure solve, and correction.
pub fn pressure_projection(
    faces: &FaceVelocityField,
    mesh: &SurfaceMesh,
    sys: &PressureSystem,
    config: &SimConfig,
) -> Result<(FaceVelocityField, PressureField, ProjectionReport)> {
    let walled = enforce_walls(faces, mesh);
    let div = vertex_divergence(&walled, mesh);
    let (pressure, solve) = solve_with(sys, &div, config)?;
    let out = project_velocities(&walled, &pressure, mesh, config);
    let after = vertex_divergence(&out, mesh);
    let before = max_constrained_divergence(&div, sys);
    let report = ProjectionReport {
        max_div_before: before,
        max_div_after: max_constrained_divergence(&after, sys),
        rhs_inf: before * config.density / config.dt,
        solve,
    };
    Ok((out, pressure, report))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub max_div_before: f64,
    pub max_div_after: f64,
    pub rhs_inf: f64,
    pub particles: usize,
    pub injected: usize,
    pub killed: usize,
    /// Particles missing after replenishment.
    pub deficit: usize,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    pub converged: bool,
}

/// Everything a simulation carries between frames.
#[derive(Clone, Debug)]
pub struct SimState {
    pub mesh: Arc<SurfaceMesh>,
    pub system: Arc<PressureSystem>,
    pub config: SimConfig,
    pub particles: ParticleSet,
    pub faces: FaceVelocityField,
    pub pressure: PressureField,
    /// Alive count that sources try to maintain.
    pub target_count: usize,
    pub steps: usize,
    pub diagnostics: Vec<StepDiagnostics>,
    rng: ChaCha8Rng,
}

impl SimState {
    /// Seed particles on `mesh` carrying the wall-corrected `initial` field.
    pub fn new(mesh: Arc<SurfaceMesh>, initial: &FaceVelocityField, config: SimConfig) -> Result<Self> {
        config.validate()?;
        if initial.len() != mesh.num_faces() {
            return Err(Error::InvalidInput("one initial velocity per face required".into()));
        }
        let faces = enforce_walls(initial, &mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let particles = seed_particles(&mesh, &faces, config.particles_per_face, &mut rng)?;
        let system = Arc::new(PressureSystem::new(&mesh));
        Ok(Self {
            target_count: particles.len(),
            pressure: PressureField {
                p: vec![0.0; mesh.num_vertices()],
            },
            mesh,
            system,
            config,
            particles,
            faces,
            steps: 0,
            diagnostics: Vec::new(),
            rng,
        })
    }

    /// Advance one frame.
    pub fn step(&mut self) -> Result<StepDiagnostics> {
        let mesh = Arc::clone(&self.mesh);
        let cfg = self.config;
        let edges = classify_open_edges(&mesh, &self.faces);
        let killed = advect(&mut self.particles, &mesh, cfg.dt);
        self.particles.compact();
        let rep = replenish(
            &mut self.particles,
            &mesh,
            &self.faces,
            &edges,
            self.target_count,
            &mut self.rng,
        );
        let g = Vec3::from(cfg.gravity) * cfg.dt;
        if g != Vec3::zeros() {
            for v in &mut self.particles.velocities {
                *v += g;
            }
        }
        let gathered = particles_to_faces(&self.particles, &mesh);
        let (faces, pressure, proj) = pressure_projection(&gathered, &mesh, &self.system, &cfg)?;
        for (v, &h) in self.particles.velocities.iter_mut().zip(&self.particles.host) {
            *v = faces.w[h];
        }
        self.faces = faces;
        self.pressure = pressure;
        self.steps += 1;
        let d = StepDiagnostics {
            step: self.steps,
            max_div_before: proj.max_div_before,
            max_div_after: proj.max_div_after,
            rhs_inf: proj.rhs_inf,
            particles: self.particles.alive_count(),
            injected: rep.injected,
            killed,
            deficit: rep.deficit,
            cg_iterations: proj.solve.iterations,
            cg_residual: proj.solve.residual,
            converged: proj.solve.converged,
        };
        self.diagnostics.push(d);
        Ok(d)
    }

    pub fn run(&mut self, steps: usize) -> Result<Vec<StepDiagnostics>> {
        (0..steps).map(|_| self.step()).collect()
    }

    /// Move onto a relabeled copy of the same geometry.
    ///
    /// Particles on faces that are no longer fluid are killed; the rest keep
    /// their positions and velocities. The target count follows the change
    /// in fluid area.
    pub fn remesh(&self, mesh: Arc<SurfaceMesh>) -> Result<SimState> {
        if mesh.vertices != self.mesh.vertices || mesh.triangles != self.mesh.triangles {
            return Err(Error::InvalidInput("remesh requires identical geometry".into()));
        }
        let mut out = self.clone();
        out.particles.kill_where(|f| !mesh.is_fluid_face(f));
        out.particles.compact();
        let old = self.mesh.num_fluid_faces().max(1);
        out.target_count = self.target_count * mesh.num_fluid_faces() / old;
        out.faces = enforce_walls(&self.faces, &mesh);
        out.system = Arc::new(PressureSystem::new(&mesh));
        out.mesh = mesh;
        Ok(out)
    }

    /// Current face velocities as image motion.
    pub fn motion_field(&self, k: &CameraIntrinsics, shape: (usize, usize)) -> MotionField {
        rasterize_surface_motion(&self.faces, &self.mesh, k, shape)
    }
}

/// Functional form of [`SimState::step`].
pub fn step(mut state: SimState) -> Result<(SimState, StepDiagnostics)> {
    let d = state.step()?;
    Ok((state, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::lift_flow;
    use crate::mesh::{build_mesh, MeshParams};
    use crate::sim::operators::tests::random_mesh;
    use crate::synthetic;
    use rand::Rng;

    fn scene_mesh(scene: &crate::io::SceneBundle, stride: usize) -> Arc<SurfaceMesh> {
        let m = build_mesh(&scene.depth, &scene.fluid_mask, &scene.intrinsics, &MeshParams::with_stride(stride));
        Arc::new(m.unwrap())
    }

    fn random_faces(mesh: &SurfaceMesh, seed: u64) -> FaceVelocityField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FaceVelocityField::from_fn(mesh, |_| {
            Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    /// Random mesh with its outer ring of faces made solid, so it has
    /// walls as well as a free surface where the ring leaves gaps.
    fn walled_mesh(seed: u64) -> SurfaceMesh {
        let m = random_mesh(seed, 7);
        let ring: std::collections::BTreeSet<usize> = (0..m.num_faces())
            .filter(|&f| m.triangles[f].iter().any(|&v| v % 7 == 0 || v / 7 == 6))
            .collect();
        m.cut(&ring)
    }

    #[test]
    fn zero_velocity_is_a_fixed_point() {
        let scene = synthetic::flat_channel(30, 20).unwrap();
        let mesh = scene_mesh(&scene, 3);
        let mut s = SimState::new(Arc::clone(&mesh), &FaceVelocityField::zeros(mesh.num_faces()), SimConfig::default()).unwrap();
        let before = (s.particles.clone(), s.faces.clone());
        for _ in 0..3 {
            let d = s.step().unwrap();
            assert_eq!(d.killed + d.injected, 0);
        }
        assert_eq!(s.particles, before.0);
        assert_eq!(s.faces, before.1);
        assert!(s.pressure.p.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn uniform_channel_flow_is_stationary() {
        let scene = synthetic::flat_channel(40, 24).unwrap();
        let mesh = scene_mesh(&scene, 2);
        let flow = MotionField::constant(40, 24, [0.7, 0.0]);
        let init = lift_flow(&flow, &mesh, &scene.intrinsics);
        let mut s = SimState::new(Arc::clone(&mesh), &init, SimConfig::default()).unwrap();
        for _ in 0..8 {
            let prev = s.faces.clone();
            s.step().unwrap();
            for f in mesh.fluid_faces() {
                let d = (s.faces.w[f] - prev.w[f]).norm();
                assert!(d <= 0.01 * prev.w[f].norm(), "face {f}: {d}");
            }
        }
    }

    #[test]
    fn beta_blends_linearly() {
        let m = walled_mesh(3);
        let sys = PressureSystem::new(&m);
        let faces = random_faces(&m, 1);
        let run = |beta| {
            let cfg = SimConfig { beta, ..SimConfig::default() };
            pressure_projection(&faces, &m, &sys, &cfg).unwrap().0
        };
        let (zero, full, weak) = (run(0.0), run(1.0), run(WEAK_BETA));
        let walled = enforce_walls(&faces, &m);
        for f in m.fluid_faces() {
            // tangential re-projection may move the last bit
            assert!((zero.w[f] - walled.w[f]).norm() <= 1e-14 * walled.w[f].norm());
            let blend = walled.w[f] * (1.0 - WEAK_BETA) + full.w[f] * WEAK_BETA;
            assert!((weak.w[f] - blend).norm() < 1e-12);
        }
    }

    #[test]
    fn projection_kills_divergence_and_respects_walls() {
        for seed in 0..4 {
            let m = walled_mesh(seed);
            let sys = PressureSystem::new(&m);
            let cfg = SimConfig::default();
            let (out, p, rep) = pressure_projection(&random_faces(&m, seed + 10), &m, &sys, &cfg).unwrap();
            assert!(rep.max_div_after * 100.0 <= rep.max_div_before, "{rep:?}");
            assert!(rep.max_div_after <= 10.0 * cfg.solver_tol * rep.rhs_inf);
            for f in m.fluid_faces() {
                for n in m.wall_normals(f) {
                    assert!(out.w[f].dot(&n).abs() <= 1e-6 * out.w[f].norm().max(1e-300));
                }
            }
            for v in 0..m.num_vertices() {
                if m.free_surface[v] {
                    assert_eq!(p.p[v], 0.0);
                }
            }
        }
    }

    #[test]
    fn long_run_keeps_particles_and_finiteness() {
        let scene = synthetic::channel_island(36, 24).unwrap();
        let mesh = scene_mesh(&scene, 3);
        let dense = crate::motion::densify_hints(&scene.hints, &scene.fluid_mask, 8.0).unwrap();
        let init = lift_flow(&dense, &mesh, &scene.intrinsics);
        let mut s = SimState::new(mesh, &init, SimConfig::default()).unwrap();
        let n0 = s.particles.alive_count() as f64;
        for _ in 0..240 {
            let d = s.step().unwrap();
            assert!(((d.particles as f64) - n0).abs() <= 0.05 * n0, "{d:?}");
            assert!(d.max_div_after <= 10.0 * s.config.solver_tol * d.rhs_inf, "{d:?}");
        }
        assert!(s.particles.all_finite());
        assert!(s.faces.w.iter().all(|w| w.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let scene = synthetic::slanted_plane(32, 24).unwrap();
        let mesh = scene_mesh(&scene, 3);
        let dense = crate::motion::densify_hints(&scene.hints, &scene.fluid_mask, 6.0).unwrap();
        let init = lift_flow(&dense, &mesh, &scene.intrinsics);
        let cfg = SimConfig { seed: 42, ..SimConfig::default() };
        let mut a = SimState::new(Arc::clone(&mesh), &init, cfg).unwrap();
        let mut b = SimState::new(mesh, &init, cfg).unwrap();
        let da = a.run(100).unwrap();
        let db = b.run(100).unwrap();
        assert_eq!(a.particles, b.particles);
        assert_eq!(da, db);
    }

    #[test]
    fn remesh_kills_particles_on_cut_faces() {
        let scene = synthetic::flat_channel(30, 20).unwrap();
        let mesh = scene_mesh(&scene, 3);
        let s = SimState::new(Arc::clone(&mesh), &random_faces(&mesh, 2), SimConfig::default()).unwrap();
        let f0 = mesh.fluid_faces().nth(mesh.num_fluid_faces() / 2).unwrap();
        let cut = Arc::new(mesh.cut(&mesh.one_ring(f0)));
        let r = s.remesh(Arc::clone(&cut)).unwrap();
        assert!(r.particles.host.iter().all(|&h| cut.is_fluid_face(h)));
        assert!(r.target_count < s.target_count);
        let other = Arc::new(random_mesh(0, 4));
        assert!(s.remesh(other).is_err());
    }

    #[test]
    fn invalid_config_is_rejected() {
        for cfg in [
            SimConfig { dt: 0.0, ..SimConfig::default() },
            SimConfig { beta: 1.5, ..SimConfig::default() },
            SimConfig { particles_per_face: 0, ..SimConfig::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        }
        let g = SimConfig::default().with_gravity_scale(0.5).gravity;
        assert_eq!(g, [0.0, -4.9, 0.0]);
    }
}
