//! End-to-end motion pipeline: hints to dense flow, mesh, simulation, and
//! exported per-frame motion fields.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::MotionField;
use crate::io::{average_flow_window, SceneBundle};
use crate::lift::{lift_flow, FaceVelocityField};
use crate::mesh::{build_mesh, MeshParams, SurfaceMesh};
use crate::motion::{default_sigma, densify_hints};
use crate::sim::{SimConfig, SimState};

/// Substitute for the learned motion refinement. Called on every exported
/// field; the default passes flow through untouched.
pub trait FlowRefiner: Send + Sync {
    fn refine(&self, field: MotionField, scene: &SceneBundle) -> Result<MotionField>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PassThrough;

impl FlowRefiner for PassThrough {
    fn refine(&self, field: MotionField, _scene: &SceneBundle) -> Result<MotionField> {
        Ok(field)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Mesh vertex spacing in pixels.
    pub stride: usize,
    /// Hint falloff in pixels; `None` picks one from the image size.
    pub sigma: Option<f64>,
    pub sim: SimConfig,
    /// Frames recorded after warmup.
    pub frames: usize,
    /// Temporal smoothing window over recorded frames; 1 disables it.
    pub flow_window: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stride: 4,
            sigma: None,
            sim: SimConfig::default(),
            frames: 0,
            flow_window: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        if self.flow_window == 0 {
            return Err(Error::InvalidConfig("flow_window must be at least 1".into()));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!("sigma must be positive, got {s}")));
            }
        }
        self.sim.validate()
    }

    pub fn mesh_params(&self) -> MeshParams {
        MeshParams::with_stride(self.stride)
    }
}

/// Dense hint field for a scene.
pub fn densify_scene(scene: &SceneBundle, sigma: Option<f64>) -> Result<MotionField> {
    let (w, h) = scene.dims();
    densify_hints(&scene.hints, &scene.fluid_mask, sigma.unwrap_or_else(|| default_sigma(w, h)))
}

/// Surface mesh of a scene.
pub fn scene_mesh(scene: &SceneBundle, params: &MeshParams) -> Result<SurfaceMesh> {
    build_mesh(&scene.depth, &scene.fluid_mask, &scene.intrinsics, params)
}

/// Simulation state initialized from the scene's hints.
pub fn initial_state(
    scene: &SceneBundle,
    mesh: Arc<SurfaceMesh>,
    config: &PipelineConfig,
) -> Result<SimState> {
    config.validate()?;
    let dense = densify_scene(scene, config.sigma)?;
    let faces: FaceVelocityField = lift_flow(&dense, &mesh, &scene.intrinsics);
    SimState::new(mesh, &faces, config.sim)
}

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub state: SimState,
    /// Field after warmup; the one rendered by default.
    pub canonical: MotionField,
    /// One field per recorded frame, smoothed and refined.
    pub frames: Vec<MotionField>,
}

/// Warm up an existing state and record `config.frames` fields.
pub fn run_state(
    mut state: SimState,
    scene: &SceneBundle,
    config: &PipelineConfig,
    refiner: &dyn FlowRefiner,
    mut progress: impl FnMut(&crate::sim::StepDiagnostics),
) -> Result<SimulationOutput> {
    config.validate()?;
    let shape = scene.dims();
    let k = scene.intrinsics;
    for _ in 0..config.sim.warmup_steps {
        progress(&state.step()?);
    }
    let canonical = refiner.refine(state.motion_field(&k, shape), scene)?;
    let mut raw = Vec::with_capacity(config.frames);
    for _ in 0..config.frames {
        progress(&state.step()?);
        raw.push(state.motion_field(&k, shape));
    }
    let smoothed = if config.flow_window > 1 && !raw.is_empty() {
        average_flow_window(&raw, config.flow_window)?
    } else {
        raw
    };
    let frames = smoothed
        .into_iter()
        .map(|f| refiner.refine(f, scene))
        .collect::<Result<_>>()?;
    Ok(SimulationOutput {
        state,
        canonical,
        frames,
    })
}

/// Full pipeline with the pass-through refiner.
pub fn simulate_scene(scene: &SceneBundle, config: &PipelineConfig) -> Result<SimulationOutput> {
    simulate_scene_with(scene, config, &PassThrough)
}

pub fn simulate_scene_with(
    scene: &SceneBundle,
    config: &PipelineConfig,
    refiner: &dyn FlowRefiner,
) -> Result<SimulationOutput> {
    config.validate()?;
    let mesh = Arc::new(scene_mesh(scene, &config.mesh_params())?);
    let state = initial_state(scene, mesh, config)?;
    run_state(state, scene, config, refiner, |_| {})
}
