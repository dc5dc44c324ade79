//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use surfluid::edit::{ObjectSpec, Primitive};
use surfluid::io::flo::{read_flo, write_flo};
use surfluid::io::load_scene;
use surfluid::pipeline::densify_scene;
use surfluid::render::{render_sequence, LayerStack, DEFAULT_FRAMES};
use surfluid::session::{CreateRequest, Request, SceneSource, Session, SimulateRequest};
use surfluid::sim::StepDiagnostics;
use surfluid::{service, synthetic, Error, Result};

#[derive(Parser)]
#[command(name = "surfluid", version, about = "Animate water in a single image")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a built-in procedural scene as a manifest directory.
    Synth {
        #[arg(value_parser = synthetic::SCENE_NAMES)]
        name: String,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 192)]
        height: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Interpolate the scene's hints into a dense field.
    Densify {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Simulate the scene and export motion fields.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Directory for `motion_0000.flo` (canonical) and one file per frame.
        #[arg(long)]
        export_flow: Option<PathBuf>,
        /// OBJ file for the surface mesh.
        #[arg(long)]
        export_mesh: Option<PathBuf>,
        /// JSON file with per-step diagnostics.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Render a looping animation from a motion field.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        flow: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FRAMES)]
        frames: usize,
        #[arg(long)]
        cyclic: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Insert an object, re-simulate, and render.
    Edit {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value_t = Shape::Sphere)]
        object: Shape,
        /// Pixel `u,v` the object sits on.
        #[arg(long, value_parser = parse_pair)]
        at: [f64; 2],
        #[arg(long, default_value_t = 0.3)]
        radius: f64,
        /// Mesh for `--object obj`.
        #[arg(long)]
        obj: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        depth_offset: f64,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = DEFAULT_FRAMES)]
        render_frames: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the HTTP/WebSocket API.
    Serve {
        /// Overrides the port of `SURFLUID_BIND`.
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Sphere,
    Box,
    Obj,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 4)]
    stride: usize,
    /// Frames recorded after warmup (`--resimulate` when editing).
    #[arg(long, visible_alias = "resimulate", default_value_t = 0)]
    frames: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    warmup_steps: usize,
    #[arg(long, default_value_t = 0.0)]
    gravity_scale: f64,
    #[arg(long)]
    sigma: Option<f64>,
}

impl SimArgs {
    fn request(&self) -> SimulateRequest {
        SimulateRequest {
            frames: self.frames,
            beta: self.beta,
            seed: self.seed,
            warmup_steps: self.warmup_steps,
            gravity_scale: self.gravity_scale,
            ..SimulateRequest::default()
        }
    }
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected u,v")?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok([p(a)?, p(b)?])
}

fn open_session(scene: &Path, sim: &SimArgs) -> Result<Session> {
    let source = SceneSource::Manifest(scene.to_string_lossy().into_owned());
    Session::create(CreateRequest {
        stride: sim.stride,
        sigma: sim.sigma,
        clear_hints: false,
        ..CreateRequest::new(source)
    })
}

fn log_step(d: &StepDiagnostics) {
    log::info!(
        "step {}: div {:.2e} -> {:.2e}, {} particles, {} cg iterations",
        d.step,
        d.max_div_before,
        d.max_div_after,
        d.particles,
        d.cg_iterations
    );
}

fn export(session: &Session, flow: Option<&Path>, mesh: Option<&Path>, diag: Option<&Path>) -> Result<()> {
    if let Some(dir) = flow {
        std::fs::create_dir_all(dir)?;
        for (i, f) in session.fields.iter().enumerate() {
            write_flo(f, dir.join(format!("motion_{i:04}.flo")))?;
        }
    }
    if let Some(p) = mesh {
        std::fs::write(p, session.mesh.to_obj())?;
    }
    if let Some(p) = diag {
        std::fs::write(p, serde_json::to_vec_pretty(&session.diagnostics)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { name, width, height, out } => {
            let scene = synthetic::by_name(&name, width, height).expect("validated by clap")?;
            let manifest = scene.save(&out)?;
            println!("{}", manifest.display());
        }
        Command::Densify { scene, sigma, out } => {
            let scene = load_scene(scene)?;
            write_flo(&densify_scene(&scene, sigma)?, out)?;
        }
        Command::Simulate { scene, sim, export_flow, export_mesh, diagnostics } => {
            let mut session = open_session(&scene, &sim)?;
            session.apply(Request::Simulate(sim.request()), log_step)?;
            export(&session, export_flow.as_deref(), export_mesh.as_deref(), diagnostics.as_deref())?;
            let last = session.diagnostics.last();
            println!(
                "{} steps, {} fields, final divergence {:.3e}",
                session.diagnostics.len(),
                session.fields.len(),
                last.map_or(0.0, |d| d.max_div_after)
            );
        }
        Command::Render { scene, flow, frames, cyclic, out } => {
            let scene = load_scene(scene)?;
            let layers = LayerStack::from_scene(&scene)?;
            let seq = render_sequence(&layers, &read_flo(flow)?, frames, cyclic)?;
            seq.save_pngs(&out)?;
            println!("{} frames in {}", seq.len(), out.display());
        }
        Command::Edit { scene, object, at, radius, obj, depth_offset, sim, render_frames, out } => {
            let primitive = match object {
                Shape::Sphere => Primitive::Sphere { radius },
                Shape::Box => Primitive::Box { half_extents: [radius; 3] },
                Shape::Obj => {
                    let path = obj.ok_or_else(|| Error::InvalidInput("--object obj needs --obj".into()))?;
                    Primitive::Obj { text: std::fs::read_to_string(path)?, scale: radius }
                }
            };
            let spec = ObjectSpec {
                primitive,
                depth_offset,
                ..ObjectSpec::sphere(at, radius)
            };
            let mut session = open_session(&scene, &sim)?;
            session.apply(Request::AddObject(spec), |_| {})?;
            session.apply(Request::Simulate(sim.request()), log_step)?;
            export(&session, Some(&out.join("flow")), Some(&out.join("mesh.obj")), None)?;
            let seq = session.render(0, render_frames, true)?;
            seq.save_pngs(out.join("frames"))?;
            std::fs::write(out.join("log.json"), serde_json::to_vec_pretty(&session.log)?)?;
            println!("{} frames in {}", seq.len(), out.join("frames").display());
        }
        Command::Serve { port } => {
            let addr = service::bind_address(port).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(addr, service::AppState::from_env()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
