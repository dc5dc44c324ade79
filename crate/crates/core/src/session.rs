//! Editing sessions: one scene with its hints, objects, simulation, and
//! exported fields, mutated through logged requests.
//!
//! Every mutation bumps the revision and appends to the request log, so a
//! session can be rebuilt exactly by replaying its log.

use std::collections::HashMap;
use std::sync::Arc;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::edit::{classify_occlusion, draw_object, InsertedObject, ObjectSpec, OcclusionSplit};
use crate::error::{Error, Result};
use crate::field::MotionField;
use crate::io::{encode_flo, load_scene, load_scene_from_memory, Manifest, SceneBundle, SparseHint};
use crate::mesh::SurfaceMesh;
use crate::pipeline::{initial_state, run_state, scene_mesh, PassThrough, PipelineConfig};
use crate::render::{render_sequence, FrameSequence, LayerStack};
use crate::sim::{SimConfig, SimState, StepDiagnostics};
use crate::synthetic;

/// Where a session's scene comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneSource {
    /// Manifest path (or scene directory) readable by the server.
    Manifest(String),
    /// Manifest plus base64 file contents keyed by the manifest's paths.
    Upload {
        manifest: Manifest,
        files: HashMap<String, String>,
    },
    /// A built-in procedural scene.
    Synthetic { name: String, width: usize, height: usize },
}

impl SceneSource {
    pub fn load(&self) -> Result<SceneBundle> {
        match self {
            SceneSource::Manifest(p) => load_scene(p),
            SceneSource::Upload { manifest, files } => {
                let engine = base64::engine::general_purpose::STANDARD;
                let decoded = files
                    .iter()
                    .map(|(k, v)| {
                        engine
                            .decode(v)
                            .map(|b| (k.clone(), b))
                            .map_err(|e| Error::Format {
                                format: "base64",
                                reason: format!("{k}: {e}"),
                            })
                    })
                    .collect::<Result<HashMap<_, _>>>()?;
                load_scene_from_memory(manifest, &decoded)
            }
            SceneSource::Synthetic { name, width, height } => {
                if *width < 2 || *height < 2 || width * height > 4096 * 4096 {
                    return Err(Error::InvalidInput(format!("unsupported size {width}x{height}")));
                }
                synthetic::by_name(name, *width, *height)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown synthetic scene `{name}`")))?
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateRequest {
    pub source: SceneSource,
    /// Mesh stride in pixels.
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Drop the scene's own hints so the session starts empty.
    #[serde(default = "yes")]
    pub clear_hints: bool,
}

fn default_stride() -> usize {
    PipelineConfig::default().stride
}

fn yes() -> bool {
    true
}

impl CreateRequest {
    pub fn new(source: SceneSource) -> Self {
        Self {
            source,
            stride: default_stride(),
            sigma: None,
            clear_hints: true,
        }
    }
}

/// Simulation parameters a client may set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateRequest {
    pub frames: usize,
    pub beta: f64,
    pub seed: u64,
    pub warmup_steps: usize,
    pub gravity_scale: f64,
    pub particles_per_face: usize,
}

impl Default for SimulateRequest {
    fn default() -> Self {
        let c = SimConfig::default();
        Self {
            frames: 0,
            beta: c.beta,
            seed: c.seed,
            warmup_steps: c.warmup_steps,
            gravity_scale: 0.0,
            particles_per_face: c.particles_per_face,
        }
    }
}

/// A logged mutation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Create(CreateRequest),
    PutHints { hints: Vec<SparseHint> },
    Simulate(SimulateRequest),
    AddObject(ObjectSpec),
    RemoveObject { index: usize },
}

/// One inserted object and how it met the surface when inserted.
#[derive(Clone, Debug)]
pub struct PlacedObject {
    pub spec: ObjectSpec,
    pub object: InsertedObject,
    pub split: OcclusionSplit,
}

/// Summary of a session for clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub revision: u64,
    pub width: usize,
    pub height: usize,
    pub vertices: usize,
    pub faces: usize,
    pub fluid_faces: usize,
    pub hints: usize,
    pub objects: usize,
    /// Motion fields available, including the post-warmup one at index 0.
    pub fields: usize,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct Session {
    pub scene: Arc<SceneBundle>,
    pub base_mesh: Arc<SurfaceMesh>,
    pub mesh: Arc<SurfaceMesh>,
    pub base_layers: Arc<LayerStack>,
    pub layers: Arc<LayerStack>,
    pub objects: Vec<PlacedObject>,
    pub config: PipelineConfig,
    pub sim: Option<SimState>,
    /// Post-warmup field followed by one field per recorded frame.
    pub fields: Vec<Arc<MotionField>>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub revision: u64,
    pub log: Vec<Request>,
}

impl Session {
    pub fn create(req: CreateRequest) -> Result<Self> {
        let mut scene = req.source.load()?;
        if req.clear_hints {
            scene.hints.clear();
        }
        let config = PipelineConfig {
            stride: req.stride,
            sigma: req.sigma,
            ..PipelineConfig::default()
        };
        config.validate()?;
        let mesh = Arc::new(scene_mesh(&scene, &config.mesh_params())?);
        let layers = Arc::new(LayerStack::from_scene(&scene)?);
        Ok(Self {
            scene: Arc::new(scene),
            base_mesh: Arc::clone(&mesh),
            mesh,
            base_layers: Arc::clone(&layers),
            layers,
            objects: Vec::new(),
            config,
            sim: None,
            fields: Vec::new(),
            diagnostics: Vec::new(),
            revision: 1,
            log: vec![Request::Create(req)],
        })
    }

    /// Rebuild a session from its log.
    pub fn replay(log: &[Request]) -> Result<Self> {
        let mut it = log.iter();
        let Some(Request::Create(c)) = it.next() else {
            return Err(Error::InvalidInput("log must start with a create request".into()));
        };
        let mut s = Self::create(c.clone())?;
        for r in it {
            s.apply(r.clone(), |_| {})?;
        }
        Ok(s)
    }

    pub fn info(&self) -> SessionInfo {
        let (width, height) = self.scene.dims();
        SessionInfo {
            revision: self.revision,
            width,
            height,
            vertices: self.mesh.num_vertices(),
            faces: self.mesh.num_faces(),
            fluid_faces: self.mesh.num_fluid_faces(),
            hints: self.scene.hints.len(),
            objects: self.objects.len(),
            fields: self.fields.len(),
            steps: self.sim.as_ref().map_or(0, |s| s.steps),
        }
    }

    /// Apply one mutation. On error the session is left unchanged.
    pub fn apply(&mut self, req: Request, progress: impl FnMut(&StepDiagnostics)) -> Result<()> {
        let mut next = self.clone();
        match &req {
            Request::Create(_) => {
                return Err(Error::InvalidInput("session already exists".into()));
            }
            Request::PutHints { hints } => next.put_hints(hints)?,
            Request::Simulate(s) => next.simulate(s, progress)?,
            Request::AddObject(spec) => next.add_object(spec)?,
            Request::RemoveObject { index } => next.remove_object(*index)?,
        }
        next.revision += 1;
        next.log.push(req);
        *self = next;
        Ok(())
    }

    fn put_hints(&mut self, hints: &[SparseHint]) -> Result<()> {
        let (w, h) = self.scene.dims();
        for hint in hints {
            hint.validate(w, h)?;
        }
        let mut scene = (*self.scene).clone();
        scene.hints = hints.to_vec();
        self.scene = Arc::new(scene);
        self.sim = None;
        self.fields.clear();
        self.diagnostics.clear();
        Ok(())
    }

    fn simulate(&mut self, req: &SimulateRequest, progress: impl FnMut(&StepDiagnostics)) -> Result<()> {
        let sim = SimConfig {
            beta: req.beta,
            seed: req.seed,
            warmup_steps: req.warmup_steps,
            particles_per_face: req.particles_per_face,
            ..SimConfig::default()
        }
        .with_gravity_scale(req.gravity_scale);
        let config = PipelineConfig {
            sim,
            frames: req.frames,
            ..self.config
        };
        config.validate()?;
        let state = initial_state(&self.scene, Arc::clone(&self.mesh), &config)?;
        let out = run_state(state, &self.scene, &config, &PassThrough, progress)?;
        self.diagnostics = out.state.diagnostics.clone();
        self.fields = std::iter::once(out.canonical)
            .chain(out.frames)
            .map(Arc::new)
            .collect();
        self.sim = Some(out.state);
        self.config = config;
        Ok(())
    }

    fn add_object(&mut self, spec: &ObjectSpec) -> Result<()> {
        let object = spec.place(&self.scene)?;
        let split = classify_occlusion(&object, &self.mesh, &self.scene.intrinsics, self.scene.dims())?;
        let mesh = Arc::new(self.mesh.cut(&split.contact_faces));
        if let Some(s) = &self.sim {
            self.sim = Some(s.remesh(Arc::clone(&mesh))?);
        }
        self.layers = Arc::new(draw_object(&self.layers, &split));
        self.mesh = mesh;
        self.fields.clear();
        self.diagnostics.clear();
        self.objects.push(PlacedObject {
            spec: spec.clone(),
            object,
            split,
        });
        Ok(())
    }

    fn remove_object(&mut self, index: usize) -> Result<()> {
        if index >= self.objects.len() {
            return Err(Error::InvalidInput(format!("no object at index {index}")));
        }
        self.objects.remove(index);
        let mut mesh = Arc::clone(&self.base_mesh);
        let mut layers = (*self.base_layers).clone();
        for o in &mut self.objects {
            o.split = classify_occlusion(&o.object, &mesh, &self.scene.intrinsics, self.scene.dims())?;
            mesh = Arc::new(mesh.cut(&o.split.contact_faces));
            layers = draw_object(&layers, &o.split);
        }
        self.mesh = mesh;
        self.layers = Arc::new(layers);
        self.sim = None;
        self.fields.clear();
        self.diagnostics.clear();
        Ok(())
    }

    /// Field `frame` as `.flo` bytes.
    pub fn motion_flo(&self, frame: usize) -> Result<Vec<u8>> {
        self.fields
            .get(frame)
            .map(|f| encode_flo(f))
            .ok_or_else(|| Error::InvalidInput(format!("no motion field for frame {frame}")))
    }

    /// Render `n + 1` frames from field `field` with the current layers.
    pub fn render(&self, field: usize, n: usize, cyclic: bool) -> Result<FrameSequence> {
        let f = self
            .fields
            .get(field)
            .ok_or_else(|| Error::InvalidInput(format!("no motion field for frame {field}")))?;
        render_sequence(&self.layers, f, n, cyclic)
    }
}
