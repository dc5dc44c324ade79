//! Surface fluid simulation: operators, particles, pressure, stepping.

pub mod grid2d;
pub mod operators;
pub mod particles;
pub mod pressure;
pub mod solver;

pub use grid2d::{grid2d_step, Grid2d};
pub use operators::{face_divergence_terms, face_gradient, face_gradient_at, vertex_divergence};
pub use particles::{
    advect, classify_open_edges, particles_to_faces, replenish, seed_particles, EdgeFlow,
    OpenEdge, ParticleSet, Replenishment,
};
pub use pressure::{
    conjugate_gradient, CsrMatrix, PressureField, PressureSystem, SolveStats, SolverParams,
};
pub use solver::{
    enforce_walls, max_constrained_divergence, pressure_projection, project_velocities,
    solve_pressure, step, ProjectionReport, SimConfig, SimState, StepDiagnostics,
    STANDARD_GRAVITY, WEAK_BETA,
};
